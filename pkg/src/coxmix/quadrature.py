"""Poisson log-likelihood of latent paths by trapezoid quadrature.

The log-likelihood of events S under intensity exp(X(t)) on [0, T] is
sum_{u in S} X(u) - integral_0^T exp(X(t)) dt.  The integral is
approximated on the union of the events and the evaluation grid: with
trapezoid weights v_u on the merged nodes and event multiplicities
Delta_u, the log-likelihood becomes

    sum_u [Delta_u X(u) - v_u exp(X(u))]

which is exact in the linear term and trapezoid-accurate in the integral.
Latent paths live on the grid; node values are linearly interpolated.
Intensity exponents are clipped to +/-30 before exponentiation so runaway
parameters saturate instead of overflowing.
"""

import numpy as np
from scipy.special import logsumexp

from . import _accel
from .exceptions import DataDomainError
from .fpca import sample_paths

__all__ = [
    "MarkQuadrature",
    "QuadratureScheme",
    "build_quadrature",
    "poisson_loglik",
    "mc_loglik",
    "QuadratureBatch",
]


class MarkQuadrature:
    """Merged nodes, weights and event multiplicities for one mark.

    ``delta[k]`` counts the events located exactly at node k (0 at pure
    grid nodes); duplicated event times stack their multiplicity on one
    node.  Weights are positive and sum to T.  The pseudo-response of node
    k is delta[k] / weights[k].
    """

    __slots__ = ("nodes", "weights", "delta")

    def __init__(self, nodes, weights, delta):
        self.nodes = nodes
        self.weights = weights
        self.delta = delta

    @property
    def pseudo_response(self):
        return self.delta / self.weights


def build_quadrature(events, grid):
    """Merge one mark's sorted events with the grid into a quadrature rule.

    Every node's weight is half the gap between its neighbors (one-sided
    at the window endpoints), so weights sum exactly to T.  An event
    coinciding with a grid node (or another event) produces a single node
    carrying the total event multiplicity.
    """
    events = np.asarray(events, dtype=float)
    if events.size and (events.min() <= 0.0 or events.max() > grid.horizon):
        raise DataDomainError("events outside (0, %g]" % grid.horizon)
    nodes, inverse = np.unique(
        np.concatenate([grid.points, events]), return_inverse=True
    )
    delta = np.zeros(len(nodes))
    np.add.at(delta, inverse[grid.size :], 1.0)
    gaps = np.diff(nodes)
    weights = np.empty(len(nodes))
    weights[0] = 0.5 * gaps[0]
    weights[-1] = 0.5 * gaps[-1]
    weights[1:-1] = 0.5 * (gaps[1:] + gaps[:-1])
    return MarkQuadrature(nodes, weights, delta)


class QuadratureScheme:
    """Per-mark quadrature rules for one account."""

    __slots__ = ("marks", "grid")

    def __init__(self, marks, grid):
        self.marks = marks
        self.grid = grid

    @classmethod
    def for_row(cls, row, grid):
        """Build from the per-mark event lists of one account."""
        return cls([build_quadrature(times, grid) for times in row], grid)


def poisson_loglik(scheme, path):
    """Quadrature log-likelihood of one latent path, all marks summed.

    ``path`` has shape (R, G) on the scheme's grid.
    """
    path = np.atleast_2d(np.asarray(path, dtype=float))
    if path.shape != (len(scheme.marks), scheme.grid.size):
        raise DataDomainError(
            "path shape %s does not match %d marks on a %d-point grid"
            % (path.shape, len(scheme.marks), scheme.grid.size)
        )
    total = 0.0
    for r, mq in enumerate(scheme.marks):
        x = scheme.grid.interpolate(path[r], mq.nodes)
        total += float(
            np.sum(mq.delta * x - mq.weights * np.exp(np.clip(x, -30.0, 30.0)))
        )
    return total


def mc_loglik(scheme, means, sigma, bases, Q, seed):
    """Monte-Carlo marginal log-likelihood of one account under a cluster.

    Averages the path likelihoods of Q Gaussian path draws in log space:
    log (1/Q) sum_q exp(loglik(path_q)), evaluated with a max-shifted
    log-sum-exp.
    """
    paths = sample_paths(means, sigma, bases, Q, seed)
    lls = np.empty(len(paths))
    for q, path in enumerate(paths):
        lls[q] = poisson_loglik(scheme, path)
    return float(logsumexp(lls) - np.log(len(paths)))


class QuadratureBatch:
    """All accounts' quadrature rules flattened for the fast path kernel.

    Nodes are stored mark-major (all accounts' mark-0 nodes, then mark-1
    and so on) with interpolation coordinates precomputed, so evaluating Q
    latent paths for every account is a single backend call.
    """

    __slots__ = ("idx", "frac", "weights", "delta", "seg", "n", "R", "G")

    def __init__(self, rowset, grid):
        idx_parts = []
        frac_parts = []
        w_parts = []
        d_parts = []
        seg = np.zeros(rowset.n * rowset.R + 1, dtype=np.int64)
        pos = 0
        for r in range(rowset.R):
            for i in range(rowset.n):
                mq = build_quadrature(rowset.rows[i][r], grid)
                k, f = grid.locate(mq.nodes)
                idx_parts.append(k)
                frac_parts.append(f)
                w_parts.append(mq.weights)
                d_parts.append(mq.delta)
                pos += len(mq.nodes)
                seg[r * rowset.n + i + 1] = pos
        self.idx = np.concatenate(idx_parts)
        self.frac = np.concatenate(frac_parts)
        self.weights = np.concatenate(w_parts)
        self.delta = np.concatenate(d_parts)
        self.seg = seg
        self.n = rowset.n
        self.R = rowset.R
        self.G = grid.size

    def loglik_matrix(self, paths):
        """Log-likelihood of each (account, path) pair, shape (n, Q).

        ``paths`` has shape (Q, R, G).
        """
        paths = np.ascontiguousarray(paths, dtype=np.float64)
        if paths.ndim != 3 or paths.shape[1] != self.R or paths.shape[2] != self.G:
            raise DataDomainError(
                "paths shape %s does not match (Q, %d, %d)"
                % (paths.shape, self.R, self.G)
            )
        out = np.zeros((self.n, paths.shape[0]))
        _accel.pp_loglik_accumulate(
            paths,
            self.idx,
            self.frac,
            self.weights,
            self.delta,
            self.seg,
            self.n,
            self.R,
            out,
        )
        return out
