"""Fitting for repeated (multi-slot) observation designs.

The slot-effect and cell-residual covariances do not depend on cluster
membership, so they are estimated once up front from ratios of the four
pair statistics and never revisited:

    Gamma_y = log(C / D)        Gamma_z = log(A D / (B C))

Account-level clustering then runs on slot-aggregated rows, whose
marginal intensity carries a factor m and the nuisance variances; the
fitted mean is mapped back to the account scale by

    mu_x = mu_tilde - Gamma_y(t,t)/2 - Gamma_z(t,t)/2 - log m

while the account-level covariance needs no adjustment.  The log m term
is easy to drop by accident; without it the account mean absorbs the
slot multiplicity and every downstream intensity is off by a factor m.
"""

import numpy as np

from . import esfit
from .events import RowSet, SequenceMatrix, aggregate_rows, single_rows
from .exceptions import DataDomainError, InsufficientDataError
from .grid import Grid
from .kernels import KernelConfig
from .smoothing import four_estimators

__all__ = [
    "NuisanceParams",
    "MultilevelFit",
    "estimate_nuisance",
    "fit_multilevel",
    "predict_membership",
]

# ratio of pair statistics is clamped here before taking logs
_RATIO_FLOOR = 1e-6
_RATIO_CEIL = 1e6

_ESTIMATOR_NAMES = ("same_cell", "cross_slot", "cross_account", "cross_both")


class NuisanceParams:
    """Slot-effect and cell-residual covariance surfaces on the grid."""

    __slots__ = ("gamma_y", "gamma_z", "grid", "bandwidth")

    def __init__(self, gamma_y, gamma_z, grid, bandwidth):
        self.gamma_y = gamma_y
        self.gamma_z = gamma_z
        self.grid = grid
        self.bandwidth = bandwidth

    @property
    def R(self):
        return self.gamma_y.shape[0]


class MultilevelFit:
    """Clustering result for multi-slot data.

    ``model`` is the mixture fitted on slot-aggregated rows; ``mu_x``
    holds the back-adjusted account-level means.  The account-level
    covariance equals the aggregated-fit covariance, so it is read from
    ``model.params.gamma`` directly.
    """

    __slots__ = ("nuisance", "model", "mu_x", "m")

    def __init__(self, nuisance, model, mu_x, m):
        self.nuisance = nuisance
        self.model = model
        self.mu_x = mu_x
        self.m = m

    @property
    def gamma_x(self):
        return self.model.params.gamma

    @property
    def posterior(self):
        return self.model.posterior


def _log_ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    # 0/0 means no pair mass on either side: no evidence, log-ratio 0
    ratio = np.where(np.isnan(ratio), 1.0, ratio)
    return np.log(np.clip(ratio, _RATIO_FLOOR, _RATIO_CEIL))


def estimate_nuisance(matrix, grid, config, bandwidth=None):
    """Estimate slot-effect and residual covariances from pair ratios.

    Needs n >= 2 accounts and m >= 2 slots.  ``bandwidth`` defaults to
    the middle candidate of ``config.bandwidths``.  The estimate depends
    only on pooled pair statistics, so it is independent of any cluster
    structure.
    """
    if bandwidth is None:
        candidates = config.bandwidths or esfit.default_bandwidths(matrix.T)
        bandwidth = sorted(candidates)[len(candidates) // 2]
    kcfg = KernelConfig(bandwidth, matrix.T, config.kernel)
    est = four_estimators(matrix, grid, kcfg)
    R = matrix.R
    for r in range(R):
        for rp in range(R):
            for name in _ESTIMATOR_NAMES:
                if not np.any(getattr(est, name)[r, rp]):
                    raise InsufficientDataError(
                        "no %s event pairs for mark pair (%d, %d)"
                        % (name.replace("_", "-"), r + 1, rp + 1)
                    )
    gamma_y = _log_ratio(est.cross_account, est.cross_both)
    gamma_z = _log_ratio(
        est.same_cell * est.cross_both, est.cross_slot * est.cross_account
    )
    # enforce the swap symmetry by averaging with the mirrored surface
    gamma_y = 0.5 * (gamma_y + gamma_y.transpose(1, 0, 3, 2))
    gamma_z = 0.5 * (gamma_z + gamma_z.transpose(1, 0, 3, 2))
    return NuisanceParams(gamma_y, gamma_z, grid, bandwidth)


def fit_multilevel(matrix, C, config):
    """Cluster accounts of a multi-slot matrix into C groups.

    Estimates the nuisance covariances once, fits the mixture on
    slot-aggregated rows, and returns the fit with account-scale means.
    """
    if matrix.m < 2:
        raise DataDomainError(
            "matrix has a single slot per account; fit the single-level model"
        )
    grid = Grid(config.grid_size, matrix.T)
    nuisance = estimate_nuisance(matrix, grid, config)
    rows = aggregate_rows(matrix)
    model = esfit.fit(rows, C, config)
    adjust = np.empty((matrix.R, grid.size))
    for r in range(matrix.R):
        adjust[r] = (
            0.5 * np.diagonal(nuisance.gamma_y[r, r])
            + 0.5 * np.diagonal(nuisance.gamma_z[r, r])
            + np.log(matrix.m)
        )
    mu_x = model.params.mu - adjust[None, :, :]
    return MultilevelFit(nuisance, model, mu_x, matrix.m)


def predict_membership(fit, rows, seed=None):
    """Posterior membership and hard labels for unseen accounts.

    ``rows`` may be a RowSet or a SequenceMatrix; matrices are reduced to
    the representation the fit was trained on (aggregated rows for a
    multi-slot fit, single rows otherwise).  Hard labels are 1-based
    argmax with ties going to the lower cluster index.
    """
    if isinstance(fit, MultilevelFit):
        model = fit.model
        if isinstance(rows, SequenceMatrix):
            rows = aggregate_rows(rows)
    else:
        model = fit
        if isinstance(rows, SequenceMatrix):
            if rows.m != 1:
                raise DataDomainError(
                    "single-level fit cannot score a multi-slot matrix"
                )
            rows = single_rows(rows)
    if not isinstance(rows, RowSet):
        raise DataDomainError("rows must be a RowSet or SequenceMatrix")
    if seed is None:
        seed = model.config["seed"]
    return esfit.predict(model, rows, seed)
