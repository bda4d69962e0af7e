"""Synthetic data generation with known cluster labels.

Cluster-level mean curves and covariance surfaces are random Fourier
sums on [0, 2]: with decay weights zeta_k = (-1)^(k+1) (k+1)^(-2),

    mu^r_c(t)        = 1 + sum_{k=0}^{50} zeta_k Z cos(k pi t)
                         + sum_{k=0}^{50} zeta_k Z' sin(k pi t)
    Gamma^{r,r}(s,t) = sum_{k=1}^{50} Ztil |zeta_k| u_k(s) u_k(t)
    Gamma^{r,r'}(s,t)= sum_{k,k'} Zchk sqrt(Ztil^r_k Ztil^{r'}_{k'}
                         |zeta_k zeta_{k'}|) u^r_k(s) u^{r'}_{k'}(t)

with u^r_k(t) = sin(k pi t + pi Ztil^r_k), Z, Z', Zchk ~ U(-1, 1) and
Ztil ~ U(0, 0.3); the cross draws are mirrored (Zchk^{r',r}_{k',k} =
Zchk^{r,r'}_{k,k'}) so the covariance satisfies the swap symmetry.  The
implied cross-type score correlations are not guaranteed jointly PSD, so
path sampling goes through the same PSD-repairing score-covariance
assembly used in fitting.

Slot (day) effects Y_j are shared by all accounts: built from the basis
{1, sin(2 pi t)} with score variance 0.2 and coupled across days as
Y_j = 0.8 Ytil_j + 0.6 Ytil_{j-1} (variance preserving).  Cell residuals
Z_{i,j} use four quarter-window bumps 1_{quarter} x 2 sin(4 pi t) with
score variance 0.05.  Events are drawn from exp(X + Y + Z) by cellwise
thinning on the piecewise-linear log-intensity.

All randomness flows from one seed through named child streams (specs,
day effects, then one stream per account), so a dataset is a pure
function of its arguments.
"""

import numpy as np

from .events import SequenceMatrix
from .exceptions import DataDomainError
from .fpca import assemble_score_cov, eigendecompose, sample_paths
from .grid import Grid

__all__ = [
    "ClusterSpecX",
    "LabeledDataset",
    "zeta_weights",
    "gen_cluster_specs",
    "gen_day_residual",
    "sample_lgcp",
    "simulate_dataset",
    "day_effect_covariance",
    "residual_covariance",
]

_N_FOURIER = 50
_Y_SCORE_VAR = 0.2
_Z_SCORE_VAR = 0.05
_AR_CURRENT = 0.8
_AR_PREVIOUS = 0.6
_MAX_INTENSITY = 1e12


def zeta_weights(count=_N_FOURIER):
    """Decay weights zeta_k = (-1)^(k+1) (k+1)^(-2) for k = 0..count."""
    k = np.arange(count + 1)
    return (-1.0) ** (k + 1) / (k + 1.0) ** 2


class ClusterSpecX:
    """Materialized generative law of one cluster's account-level process."""

    __slots__ = ("mu", "gamma", "grid")

    def __init__(self, mu, gamma, grid):
        self.mu = mu
        self.gamma = gamma
        self.grid = grid


class LabeledDataset:
    """A simulated matrix with its generative ground truth.

    ``labels`` are 1-based cluster indices per account; ``truth`` maps
    curve names to the generating grids for diagnostics.
    """

    __slots__ = ("matrix", "labels", "truth")

    def __init__(self, matrix, labels, truth):
        self.matrix = matrix
        self.labels = labels
        self.truth = truth


def gen_cluster_specs(C, R, seed, grid=None):
    """Draw C clusters' mean and covariance grids on [0, 2].

    Draw order per cluster: cosine coefficients, sine coefficients, phase
    draws, then cross-type correlation draws for each r < r' pair.
    """
    C, R = int(C), int(R)
    if C < 1 or R < 1:
        raise DataDomainError("need C >= 1 and R >= 1")
    if grid is None:
        grid = Grid(51, 2.0)
    rng = np.random.default_rng(seed)
    t = grid.points
    G = grid.size
    zeta = zeta_weights()
    k_all = np.arange(_N_FOURIER + 1)
    cos_table = np.cos(np.pi * np.outer(k_all, t))
    sin_table = np.sin(np.pi * np.outer(k_all, t))
    specs = []
    for _c in range(C):
        Zcos = rng.uniform(-1.0, 1.0, (R, _N_FOURIER + 1))
        Zsin = rng.uniform(-1.0, 1.0, (R, _N_FOURIER + 1))
        phase = rng.uniform(0.0, 0.3, (R, _N_FOURIER))
        mu = 1.0 + (Zcos * zeta) @ cos_table + (Zsin * zeta) @ sin_table
        # rows of V are sqrt(score variance) times the phase-shifted sines
        k_pos = np.arange(1, _N_FOURIER + 1)
        V = np.empty((R, _N_FOURIER, G))
        for r in range(R):
            waves = np.sin(np.pi * np.outer(k_pos, t) + np.pi * phase[r][:, None])
            V[r] = np.sqrt(phase[r] * np.abs(zeta[1:]))[:, None] * waves
        gamma = np.empty((R, R, G, G))
        for r in range(R):
            gamma[r, r] = V[r].T @ V[r]
        for r in range(R):
            for rp in range(r + 1, R):
                corr = rng.uniform(-1.0, 1.0, (_N_FOURIER, _N_FOURIER))
                gamma[r, rp] = V[r].T @ corr @ V[rp]
                gamma[rp, r] = gamma[r, rp].T
        specs.append(ClusterSpecX(mu, gamma, grid))
    return specs


def _y_basis(t):
    return np.stack([np.ones_like(t), np.sin(2.0 * np.pi * t)])


def _z_basis(t):
    quarters = [(0.0, 0.5), (0.5, 1.0), (1.0, 1.5), (1.5, 2.0)]
    wave = 2.0 * np.sin(4.0 * np.pi * t)
    rows = []
    for lo, hi in quarters:
        if lo == 0.0:
            inside = (t >= lo) & (t <= hi)
        else:
            inside = (t > lo) & (t <= hi)
        rows.append(np.where(inside, wave, 0.0))
    return np.stack(rows)


def day_effect_covariance(grid):
    """Analytic same-day covariance of the Y effect: 0.2 sum_k phi_k phi_k."""
    basis = _y_basis(grid.points)
    return _Y_SCORE_VAR * basis.T @ basis


def residual_covariance(grid):
    """Analytic covariance of the cell residual Z: 0.05 sum_k phi_k phi_k."""
    basis = _z_basis(grid.points)
    return _Z_SCORE_VAR * basis.T @ basis


def gen_day_residual(m, R, seed, grid=None, accounts=1):
    """Draw slot effects Y (m, R, G) and cell residuals Z (accounts, m, R, G).

    Y paths are coupled across consecutive slots with the variance
    preserving weights (0.8, 0.6); slot 1 is uncoupled.
    """
    m, R = int(m), int(R)
    if m < 1:
        raise DataDomainError("need m >= 1 slots")
    if grid is None:
        grid = Grid(51, 2.0)
    rng = np.random.default_rng(seed)
    yb = _y_basis(grid.points)
    zb = _z_basis(grid.points)
    y_scores = rng.normal(0.0, np.sqrt(_Y_SCORE_VAR), (m, R, yb.shape[0]))
    ytil = y_scores @ yb
    Y = ytil.copy()
    if m > 1:
        Y[1:] = _AR_CURRENT * ytil[1:] + _AR_PREVIOUS * ytil[:-1]
    z_scores = rng.normal(
        0.0, np.sqrt(_Z_SCORE_VAR), (int(accounts), m, R, zb.shape[0])
    )
    Z = z_scores @ zb
    return Y, Z


def sample_lgcp(log_intensity, horizon, seed):
    """Sample one inhomogeneous Poisson path from a gridded log-intensity.

    The log-intensity is piecewise linear between grid nodes, so the
    intensity is monotone within each cell; thinning under the cellwise
    envelope max(exp(endpoint values)) is exact.  Returns sorted times in
    (0, T].  Intensities above 1e12 raise an error (runaway parameters).
    """
    L = np.asarray(log_intensity, dtype=float)
    if L.ndim != 1 or L.size < 2:
        raise DataDomainError("log-intensity must be a grid curve")
    if not np.all(np.isfinite(L)):
        raise DataDomainError("log-intensity has non-finite values")
    if np.max(L) > np.log(_MAX_INTENSITY):
        raise DataDomainError(
            "intensity exceeds %g; parameters have run away" % _MAX_INTENSITY
        )
    rng = np.random.default_rng(seed)
    spacing = float(horizon) / (L.size - 1)
    cell_log_max = np.maximum(L[:-1], L[1:])
    counts = rng.poisson(np.exp(cell_log_max) * spacing)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0)
    cells = np.repeat(np.arange(L.size - 1), counts)
    offsets = rng.random(total)
    accept_draws = rng.random(total)
    log_at = L[cells] * (1.0 - offsets) + L[cells + 1] * offsets
    keep = np.log(accept_draws) < log_at - cell_log_max[cells]
    times = (cells[keep] + offsets[keep]) * spacing
    times = times[times > 0.0]
    return np.sort(times)


def simulate_dataset(
    C,
    n_per_cluster,
    m,
    R,
    seed,
    horizon=2.0,
    grid_size=51,
):
    """Simulate a labeled dataset of n_per_cluster accounts per cluster.

    Accounts are laid out in cluster blocks (labels 1..C).  With m = 1 the
    intensity is the account process alone; with m > 1 shared slot effects
    and per-cell residuals are added.  Identical arguments give identical
    datasets.
    """
    C, n_per_cluster, m, R = int(C), int(n_per_cluster), int(m), int(R)
    if min(C, n_per_cluster, m, R) < 1:
        raise DataDomainError("all size parameters must be positive")
    grid = Grid(int(grid_size), float(horizon))
    root = np.random.SeedSequence(seed)
    ss_specs, ss_days, ss_accounts = root.spawn(3)
    specs = gen_cluster_specs(C, R, ss_specs, grid)

    # per-cluster sampling law through the same KL machinery the fitter uses
    reps = []
    for spec in specs:
        bases = [eigendecompose(spec.gamma[r, r], grid) for r in range(R)]
        cov = assemble_score_cov(spec.gamma, bases)
        reps.append((bases, cov))

    n_total = C * n_per_cluster
    if m > 1:
        Y, _ = gen_day_residual(m, R, ss_days, grid)
    else:
        Y = np.zeros((m, R, grid.size))
    zb = _z_basis(grid.points)

    account_seeds = ss_accounts.spawn(n_total)
    labels = np.repeat(np.arange(1, C + 1), n_per_cluster)
    records = []
    for i in range(n_total):
        c = (labels[i] - 1)
        bases, cov = reps[c]
        rng_i = np.random.default_rng(account_seeds[i])
        X = sample_paths(specs[c].mu, cov, bases, 1, rng_i)[0]
        if m > 1:
            z_scores = rng_i.normal(
                0.0, np.sqrt(_Z_SCORE_VAR), (m, R, zb.shape[0])
            )
            Z = z_scores @ zb
        else:
            Z = np.zeros((m, R, grid.size))
        for j in range(m):
            for r in range(R):
                path = X[r] + Y[j, r] + Z[j, r]
                for time in sample_lgcp(path, grid.horizon, rng_i):
                    records.append((i, j, float(time), r + 1))
    matrix = SequenceMatrix.from_records(
        n_total, m, R, grid.horizon, records
    )

    gamma_y = np.zeros((R, R, grid.size, grid.size))
    gamma_z = np.zeros((R, R, grid.size, grid.size))
    for r in range(R):
        gamma_y[r, r] = day_effect_covariance(grid) if m > 1 else 0.0
        gamma_z[r, r] = residual_covariance(grid) if m > 1 else 0.0
    truth = {
        "grid": grid.points,
        "pi": np.full(C, 1.0 / C),
        "mu": np.stack([spec.mu for spec in specs]),
        "gamma_x": np.stack([spec.gamma for spec in specs]),
        "gamma_y": gamma_y,
        "gamma_z": gamma_z,
    }
    return LabeledDataset(matrix, labels, truth)
