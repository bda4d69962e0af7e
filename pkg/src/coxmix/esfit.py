"""Semi-parametric expectation-solution fitting of the mixture model.

Each account i carries per-type latent log-intensities X^r drawn from one
of C clusters, X ~ GP(mu_c, Gamma_c), and events follow a Poisson process
with intensity exp(X^r).  Marginalizing X gives moment identities that
kernel statistics estimate directly:

    first order   rho^r_c(t)      = exp[mu^r_c(t) + Gamma^{r,r}_c(t,t)/2]
    second order  rho^{r,r'}_c(s,t) = rho^r_c(s) rho^{r'}_c(t)
                                      exp[Gamma^{r,r'}_c(s,t)]

The fitting loop alternates a Monte-Carlo E-step (posterior cluster
responsibilities from sampled-path likelihoods) with a solution step that
solves the conditionally expected estimating equations in closed form:
with posterior-weighted statistics EA = sum_i w_i a_i, EB = sum_i w_i b_i,

    pi_c    = mean_i w_{c,i}
    Gamma_c = log[ pi_c EA / (EB (x) EB) ]
    mu_c    = log EB - log pi_c - Gamma_c(t,t)/2

which makes every iteration's parameter update exact given the posterior.
Bandwidth is re-selected every iteration by observed-data log-likelihood
over a small candidate set.
"""

import numpy as np
from scipy import ndimage
from scipy.special import logsumexp

from .exceptions import (
    CoxmixError,
    DataDomainError,
    DegenerateClusterError,
)
from .fpca import assemble_score_cov, eigendecompose, sample_paths, truncate
from .grid import Grid
from .kernels import EPANECHNIKOV, KERNEL_NAMES, KernelConfig
from .quadrature import QuadratureBatch
from .smoothing import KernelStats

__all__ = [
    "FitConfig",
    "MixtureParams",
    "FittedModel",
    "first_order_intensity",
    "second_order_intensity",
    "e_step",
    "s_step",
    "select_bandwidth",
    "fit",
    "bic",
    "predict",
    "default_bandwidths",
]

_STAT_FLOOR = 1e-12
_GAMMA_CLAMP = 10.0
_DEGENERATE_MASS = 1e-8


def default_bandwidths(horizon):
    """Candidate bandwidths {0.05, 0.1, 0.2, 0.4} x T/2, ascending."""
    return tuple(f * 0.5 * horizon for f in (0.05, 0.1, 0.2, 0.4))


class FitConfig:
    """Knobs of the fitting loop; ``seed`` is mandatory.

    bandwidths=None selects the default candidate set for the data window.
    ``workers`` is accepted for forward compatibility and echoed into the
    model file; execution is single-threaded either way, which is what
    makes runs byte-reproducible.
    """

    __slots__ = (
        "seed",
        "grid_size",
        "kernel",
        "bandwidths",
        "mc_paths",
        "energy",
        "tol",
        "max_iter",
        "restarts",
        "workers",
    )

    def __init__(
        self,
        seed,
        grid_size=51,
        kernel=EPANECHNIKOV,
        bandwidths=None,
        mc_paths=500,
        energy=0.95,
        tol=1e-4,
        max_iter=200,
        restarts=1,
        workers=1,
    ):
        if seed is None:
            raise DataDomainError("a seed is required; runs must be reproducible")
        self.seed = int(seed)
        self.grid_size = int(grid_size)
        if self.grid_size < 2:
            raise DataDomainError("grid_size must be at least 2")
        if kernel not in KERNEL_NAMES:
            raise DataDomainError("unknown kernel %r" % kernel)
        self.kernel = kernel
        self.bandwidths = (
            None if bandwidths is None else tuple(sorted(float(h) for h in bandwidths))
        )
        if self.bandwidths is not None and not self.bandwidths:
            raise DataDomainError("bandwidth candidate list is empty")
        self.mc_paths = int(mc_paths)
        if self.mc_paths < 1:
            raise DataDomainError("mc_paths must be at least 1")
        self.energy = float(energy)
        if not 0.0 < self.energy <= 1.0:
            raise DataDomainError("energy must lie in (0, 1]")
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.restarts = int(restarts)
        if self.max_iter < 1 or self.restarts < 1:
            raise DataDomainError("max_iter and restarts must be at least 1")
        self.workers = int(workers)
        if self.workers < 1:
            raise DataDomainError("workers must be at least 1")

    def as_dict(self):
        return {
            "seed": self.seed,
            "grid_size": self.grid_size,
            "kernel": self.kernel,
            "bandwidths": None if self.bandwidths is None else list(self.bandwidths),
            "mc_paths": self.mc_paths,
            "energy": self.energy,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "restarts": self.restarts,
            "workers": self.workers,
        }


class MixtureParams:
    """Mixture weights and per-cluster mean curves / covariance surfaces.

    pi: (C,) simplex; mu: (C, R, G); gamma: (C, R, R, G, G) with the swap
    symmetry gamma[c, r', r] = gamma[c, r, r'] transposed in (s, t).
    """

    __slots__ = ("pi", "mu", "gamma", "grid")

    def __init__(self, pi, mu, gamma, grid):
        self.pi = pi
        self.mu = mu
        self.gamma = gamma
        self.grid = grid

    @property
    def C(self):
        return len(self.pi)

    @property
    def R(self):
        return self.mu.shape[1]


class ClusterRepresentation:
    """Truncated path-sampling law of one cluster: bases plus score cov."""

    __slots__ = ("bases", "score_cov")

    def __init__(self, bases, score_cov):
        self.bases = bases
        self.score_cov = score_cov


class FittedModel:
    """Result of :func:`fit`: parameters, posterior, diagnostics.

    ``trace`` rows are (iteration, loglik, max posterior delta, bandwidth).
    The stored posterior is the responsibility matrix of the final
    parameters (one extra expectation pass after the last solution step).
    """

    __slots__ = (
        "params",
        "posterior",
        "bandwidth",
        "clusters",
        "trace",
        "loglik",
        "param_count",
        "bic",
        "config",
        "n",
        "pooled_slots",
    )

    def __init__(
        self,
        params,
        posterior,
        bandwidth,
        clusters,
        trace,
        loglik,
        param_count,
        bic,
        config,
        n,
        pooled_slots,
    ):
        self.params = params
        self.posterior = posterior
        self.bandwidth = bandwidth
        self.clusters = clusters
        self.trace = trace
        self.loglik = loglik
        self.param_count = param_count
        self.bic = bic
        self.config = config
        self.n = n
        self.pooled_slots = pooled_slots

    @property
    def C(self):
        return self.params.C

    @property
    def R(self):
        return self.params.R

    @property
    def grid(self):
        return self.params.grid


def first_order_intensity(mu, gamma_diag):
    """rho(t) = exp[mu(t) + Gamma(t,t)/2] pointwise."""
    return np.exp(np.asarray(mu, dtype=float) + 0.5 * np.asarray(gamma_diag, dtype=float))


def second_order_intensity(rho_r, rho_rp, gamma):
    """rho(s,t) = rho^r(s) rho^{r'}(t) exp[Gamma^{r,r'}(s,t)]."""
    return np.outer(rho_r, rho_rp) * np.exp(np.asarray(gamma, dtype=float))


def _fill_nearest(values, valid):
    """Replace invalid entries by their nearest valid neighbor.

    With no valid source entries the (floored, clamped) values stand as
    computed.
    """
    if valid.all() or not valid.any():
        return values
    indices = ndimage.distance_transform_edt(
        ~valid, return_distances=False, return_indices=True
    )
    return values[tuple(indices)]


def s_step(posterior, stats, return_masks=False):
    """Solve the expected estimating equations for new mixture parameters.

    Statistics below the 1e-12 floor are masked and their Gamma / mu
    entries filled from the nearest valid grid location; Gamma is clamped
    to [-10, 10].  A cluster whose total responsibility falls under 1e-8
    raises :class:`DegenerateClusterError`.
    """
    posterior = np.asarray(posterior, dtype=float)
    n, C = posterior.shape
    if n != stats.n:
        raise DataDomainError("posterior rows do not match account count")
    R, G = stats.R, stats.grid.size
    pi = posterior.mean(axis=0)
    mu = np.empty((C, R, G))
    gamma = np.empty((C, R, R, G, G))
    mask_a = np.empty((C, R, R, G, G), dtype=bool)
    mask_b = np.empty((C, R, G), dtype=bool)
    for c in range(C):
        w = posterior[:, c]
        mass = w.sum()
        if mass < _DEGENERATE_MASS:
            raise DegenerateClusterError(c, mass)
        EB = stats.weighted_point_sum(w)
        EA = stats.weighted_pair_sum(w)
        valid_b = EB > _STAT_FLOOR
        valid_a = (
            (EA > _STAT_FLOOR)
            & valid_b[:, None, :, None]
            & valid_b[None, :, None, :]
        )
        logEB = np.log(np.maximum(EB, _STAT_FLOOR))
        gam = (
            np.log(pi[c] * np.maximum(EA, _STAT_FLOOR))
            - logEB[:, None, :, None]
            - logEB[None, :, None, :]
        )
        for r in range(R):
            for rp in range(R):
                gam[r, rp] = _fill_nearest(gam[r, rp], valid_a[r, rp])
        gam = np.clip(gam, -_GAMMA_CLAMP, _GAMMA_CLAMP)
        # enforce the swap symmetry Gamma^{r',r}(t,s) = Gamma^{r,r'}(s,t)
        gam = 0.5 * (gam + gam.transpose(1, 0, 3, 2))
        for r in range(R):
            # mu uses the freshly updated covariance diagonal
            vals = logEB[r] - np.log(pi[c]) - 0.5 * np.diagonal(gam[r, r])
            mu[c, r] = _fill_nearest(vals, valid_b[r])
        gamma[c] = gam
        mask_a[c] = valid_a
        mask_b[c] = valid_b
    params = MixtureParams(pi, mu, gamma, stats.grid)
    if return_masks:
        return params, mask_a, mask_b
    return params


def _cluster_representation(params, c, energy):
    """Truncated sampling law of cluster c at the given energy fraction."""
    bases = [
        truncate(eigendecompose(params.gamma[c, r, r], params.grid), energy)
        for r in range(params.R)
    ]
    return ClusterRepresentation(bases, assemble_score_cov(params.gamma[c], bases))


def _evaluate(params, batch, energy, Q, seed_seq):
    """Monte-Carlo per-account, per-cluster marginal log-likelihoods.

    Draws Q paths per cluster (shared across accounts) from per-cluster
    child seeds, returning the (n, C) log f-hat matrix and the cluster
    representations used.
    """
    C = params.C
    logf = np.empty((batch.n, C))
    reps = []
    children = seed_seq.spawn(C)
    for c in range(C):
        rep = _cluster_representation(params, c, energy)
        paths = sample_paths(
            params.mu[c], rep.score_cov, rep.bases, Q, children[c]
        )
        lls = batch.loglik_matrix(paths)
        logf[:, c] = logsumexp(lls, axis=1) - np.log(Q)
        reps.append(rep)
    return logf, reps


def _posterior_from(logf, pi):
    """Responsibilities and observed-data log-likelihood from log f-hat."""
    with np.errstate(divide="ignore"):
        joint = np.log(pi)[None, :] + logf
    norms = logsumexp(joint, axis=1)
    bad = np.nonzero(~np.isfinite(norms))[0]
    if bad.size:
        raise CoxmixError(
            "account %d has zero likelihood under every cluster" % bad[0]
        )
    posterior = np.exp(joint - norms[:, None])
    return posterior, float(norms.sum())


def e_step(batch, params, energy, Q, seed):
    """Posterior responsibilities under the current parameters.

    ``seed`` may be an int or a SeedSequence; Q paths per cluster are
    drawn once and shared across all accounts.
    """
    seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    logf, _ = _evaluate(params, batch, energy, Q, seed_seq)
    posterior, _ = _posterior_from(logf, params.pi)
    return posterior


def _kmeans(features, C, rng, restarts=10, max_rounds=100):
    """Plain k-means with greedy plus-plus seeding; deterministic via rng.

    Returns hard labels in [0, C).  Implemented here rather than borrowed
    so fits stay byte-reproducible with no dependence on external library
    versions.
    """
    n = features.shape[0]
    best_labels = None
    best_inertia = np.inf
    sq = np.einsum("ij,ij->i", features, features)
    for _ in range(restarts):
        centers = np.empty((C, features.shape[1]))
        first = int(rng.integers(n))
        centers[0] = features[first]
        d2 = sq + sq[first] - 2.0 * features @ features[first]
        d2 = np.maximum(d2, 0.0)
        for c in range(1, C):
            total = d2.sum()
            if total <= 0.0:
                pick = int(rng.integers(n))
            else:
                pick = int(np.searchsorted(np.cumsum(d2), rng.random() * total))
                pick = min(pick, n - 1)
            centers[c] = features[pick]
            cand = sq + sq[pick] - 2.0 * features @ features[pick]
            d2 = np.minimum(d2, np.maximum(cand, 0.0))
        labels = np.zeros(n, dtype=np.int64)
        for _round in range(max_rounds):
            dist = (
                sq[:, None]
                - 2.0 * features @ centers.T
                + np.einsum("cj,cj->c", centers, centers)[None, :]
            )
            new_labels = np.argmin(dist, axis=1)
            for c in range(C):
                members = new_labels == c
                if members.any():
                    centers[c] = features[members].mean(axis=0)
                else:
                    # re-seed an emptied cluster at the worst-fit point
                    worst = int(np.argmax(dist[np.arange(n), new_labels]))
                    centers[c] = features[worst]
                    new_labels[worst] = c
            if np.array_equal(new_labels, labels) and _round > 0:
                break
            labels = new_labels
        inertia = float(
            np.sum((features - centers[labels]) ** 2)
        )
        if inertia < best_inertia - 1e-12:
            best_inertia = inertia
            best_labels = labels.copy()
    return best_labels


def _init_posterior(stats, C, rng):
    """Hard initial responsibilities from k-means on smoothed count curves."""
    n = stats.n
    if C == 1:
        return np.ones((n, 1))
    features = stats.point_stats().reshape(n, -1)
    labels = _kmeans(features, C, rng)
    posterior = np.zeros((n, C))
    posterior[np.arange(n), labels] = 1.0
    return posterior


class _RunResult:
    __slots__ = ("params", "posterior", "bandwidth", "reps", "trace", "loglik")

    def __init__(self, params, posterior, bandwidth, reps, trace, loglik):
        self.params = params
        self.posterior = posterior
        self.bandwidth = bandwidth
        self.reps = reps
        self.trace = trace
        self.loglik = loglik


def _iteration(posterior, stats_by_h, batch, energy, Q, master_seed, attempt, it):
    """One solve-evaluate sweep over all bandwidth candidates.

    Returns the winning candidate's S-step parameters, its fresh posterior
    and log-likelihood, with ties broken toward the larger bandwidth.
    """
    best = None
    for ih, h in enumerate(sorted(stats_by_h)):
        params = s_step(posterior, stats_by_h[h])
        seed_seq = np.random.SeedSequence(
            entropy=master_seed, spawn_key=(attempt, it, ih)
        )
        logf, reps = _evaluate(params, batch, energy, Q, seed_seq)
        post_new, loglik = _posterior_from(logf, params.pi)
        if best is None or loglik >= best[0]:
            best = (loglik, h, params, post_new, reps)
    return best


def select_bandwidth(posterior, stats_by_h, batch, energy, Q, seed):
    """Pick the candidate bandwidth maximizing observed-data log-likelihood.

    Each candidate's statistics are solved and evaluated under the given
    posterior; ties break toward the larger (smoother) bandwidth.
    """
    _, h, _, _, _ = _iteration(
        posterior, stats_by_h, batch, energy, Q, int(seed), 0, 0
    )
    return h


def _es_run(stats_by_h, batch, C, config, attempt):
    """One full ES run from a k-means initialization."""
    largest_h = max(stats_by_h)
    init_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(attempt, 0))
    )
    posterior = _init_posterior(stats_by_h[largest_h], C, init_rng)
    trace = []
    result = None
    for it in range(1, config.max_iter + 1):
        loglik, h, params, post_new, reps = _iteration(
            posterior,
            stats_by_h,
            batch,
            config.energy,
            config.mc_paths,
            config.seed,
            attempt,
            it,
        )
        delta = float(np.max(np.abs(post_new - posterior)))
        posterior = post_new
        trace.append((it, loglik, delta, h))
        result = _RunResult(params, posterior, h, reps, trace, loglik)
        if delta < config.tol:
            break
    return result


def _count_parameters(C, reps):
    """Effective dof: mixture weights + mean ranks + score-cov blocks."""
    k = C - 1
    for rep in reps:
        ranks = [basis.rank for basis in rep.bases]
        total = sum(ranks)
        k += total + total * (total + 1) // 2
    return k


def fit(rowset, C, config):
    """Fit a C-cluster mixture to single-slot rows.

    Precomputes kernel statistics for every candidate bandwidth, then runs
    ``config.restarts`` independent ES runs and keeps the one with the
    highest final observed-data log-likelihood.  Degenerate-cluster
    failures are retried across restarts and re-raised if every restart
    fails.
    """
    C = int(C)
    if C < 1:
        raise DataDomainError("need C >= 1 clusters")
    if C > rowset.n:
        raise DataDomainError(
            "C=%d exceeds the %d available accounts" % (C, rowset.n)
        )
    grid = Grid(config.grid_size, rowset.T)
    candidates = (
        config.bandwidths
        if config.bandwidths is not None
        else default_bandwidths(rowset.T)
    )
    stats_by_h = {
        h: KernelStats(rowset, grid, KernelConfig(h, rowset.T, config.kernel))
        for h in candidates
    }
    batch = QuadratureBatch(rowset, grid)
    best = None
    failure = None
    for attempt in range(config.restarts):
        try:
            run = _es_run(stats_by_h, batch, C, config, attempt)
        except DegenerateClusterError as exc:
            failure = exc
            continue
        if best is None or run.loglik > best.loglik:
            best = run
    if best is None:
        raise failure
    param_count = _count_parameters(C, best.reps)
    bic_value = -2.0 * best.loglik + param_count * np.log(rowset.n)
    return FittedModel(
        params=best.params,
        posterior=best.posterior,
        bandwidth=best.bandwidth,
        clusters=best.reps,
        trace=best.trace,
        loglik=best.loglik,
        param_count=param_count,
        bic=bic_value,
        config=config.as_dict(),
        n=rowset.n,
        pooled_slots=rowset.pooled_slots,
    )


def bic(model):
    """Bayes information criterion of a fitted model (lower is better)."""
    return model.bic


def predict(model, rowset, seed):
    """Responsibilities and hard labels for new accounts under a fit.

    New rows must share the mark count and window of the training data.
    Labels are 1-based; ties break toward the lower cluster index.
    """
    if rowset.R != model.R:
        raise DataDomainError(
            "mark count %d does not match the fitted %d" % (rowset.R, model.R)
        )
    if abs(rowset.T - model.grid.horizon) > 1e-9:
        raise DataDomainError(
            "window %g does not match the fitted %g"
            % (rowset.T, model.grid.horizon)
        )
    batch = QuadratureBatch(rowset, model.grid)
    Q = model.config["mc_paths"]
    seed_seq = (
        seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    )
    children = seed_seq.spawn(model.C)
    logf = np.empty((rowset.n, model.C))
    for c in range(model.C):
        rep = model.clusters[c]
        paths = sample_paths(
            model.params.mu[c], rep.score_cov, rep.bases, Q, children[c]
        )
        lls = batch.loglik_matrix(paths)
        logf[:, c] = logsumexp(lls, axis=1) - np.log(Q)
    posterior, _ = _posterior_from(logf, model.params.pi)
    labels = np.argmax(posterior, axis=1) + 1
    return posterior, labels
