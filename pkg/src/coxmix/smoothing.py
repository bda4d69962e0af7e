"""Kernel-smoothed first- and second-order event statistics.

For an account's per-mark event times S^r, with kernel K_h and edge
correction g on the window [0, T]:

    b^r(t)        = sum_{u in S^r} K_h(t - u) / (n g(t))
    a^{r,r'}(s,t) = sum_{u in S^r, v in S^{r'}, u != v}
                      K_h(s - u) K_h(t - v) / (n g(s) g(t))

The pair exclusion u != v removes identical event instances, not identical
time values, so duplicated timestamps contribute their cross terms.  All
pair surfaces are computed separably: product of per-mark marginal sums
minus a same-instance diagonal correction, which costs O(events x G + G^2)
per mark pair instead of the quadratic double sum.

The same decomposition yields the four pooled estimators over an n x m
matrix (same/cross account x same/cross slot pair averages) used to
separate slot-level and residual covariance from account-level structure.
"""

import numpy as np

from . import _accel
from .exceptions import DataDomainError, InsufficientDataError
from .kernels import EPANECHNIKOV, edge_correction

__all__ = [
    "KernelStats",
    "FourEstimators",
    "point_stat",
    "pair_stat",
    "four_estimators",
]


def _corrected_rows(times, grid, config, g):
    """Kernel rows K_h(grid - u) / g(grid) for each event u, shape (N, G)."""
    rows = _accel.kernel_matrix(
        times, grid.points, config.bandwidth, config.kernel == EPANECHNIKOV
    )
    rows /= g[None, :]
    return rows


class KernelStats:
    """Per-account smoothed statistics for one bandwidth, cached for reuse.

    Stores, per (account, mark), the marginal kernel sum f(s) =
    sum_u K_h(s - u)/g(s) and the same-instance Gram correction
    eg(s,t) = sum_u K_h(s - u) K_h(t - u)/(g(s) g(t)), from which both the
    per-account statistics and their posterior-weighted sums follow by
    linear algebra.
    """

    def __init__(self, rowset, grid, config):
        if abs(config.horizon - rowset.T) > 1e-12 or abs(
            config.horizon - grid.horizon
        ) > 1e-12:
            raise DataDomainError("rowset, grid and kernel window disagree")
        self.grid = grid
        self.config = config
        self.n = rowset.n
        self.R = rowset.R
        self.g = edge_correction(grid.points, config)
        G = grid.size
        self.F = np.zeros((self.n, self.R, G))
        self.EG = np.zeros((self.n, self.R, G, G))
        for r in range(self.R):
            lengths = np.array(
                [len(rowset.rows[i][r]) for i in range(self.n)], dtype=np.int64
            )
            if lengths.sum() == 0:
                continue
            pooled = np.concatenate([rowset.rows[i][r] for i in range(self.n)])
            rows = _corrected_rows(pooled, grid, config, self.g)
            offsets = np.zeros(self.n, dtype=np.intp)
            np.cumsum(lengths[:-1], out=offsets[1:])
            # accounts with no events contribute zero rows; reduceat needs
            # nonempty segments, so sum per account explicitly
            start = 0
            for i in range(self.n):
                stop = start + lengths[i]
                if stop > start:
                    block = rows[start:stop]
                    self.F[i, r] = block.sum(axis=0)
                    self.EG[i, r] = block.T @ block
                start = stop

    def point_stats(self):
        """All accounts' b curves, shape (n, R, G)."""
        return self.F / self.n

    def pair_stats_account(self, i):
        """One account's a surfaces, shape (R, R, G, G)."""
        R, G = self.R, self.grid.size
        out = np.empty((R, R, G, G))
        for r in range(R):
            for rp in range(R):
                surf = np.outer(self.F[i, r], self.F[i, rp])
                if r == rp:
                    surf -= self.EG[i, r]
                out[r, rp] = surf / self.n
        return out

    def weighted_point_sum(self, weights):
        """sum_i w_i b_i, shape (R, G)."""
        return np.tensordot(weights, self.F, axes=1) / self.n

    def weighted_pair_sum(self, weights):
        """sum_i w_i a_i, shape (R, R, G, G), via the separable form."""
        R, G = self.R, self.grid.size
        out = np.empty((R, R, G, G))
        for r in range(R):
            for rp in range(r, R):
                surf = np.einsum(
                    "i,ig,ih->gh", weights, self.F[:, r], self.F[:, rp]
                )
                if r == rp:
                    surf -= np.tensordot(weights, self.EG[:, r], axes=1)
                out[r, rp] = surf / self.n
                if rp != r:
                    out[rp, r] = out[r, rp].T
        return out


def point_stat(row, n, grid, config):
    """Smoothed count curves b^r(t) for one account, shape (R, G).

    ``row`` is the per-mark list of sorted time arrays; ``n`` is the
    account count entering the normalization.
    """
    g = edge_correction(grid.points, config)
    out = np.zeros((len(row), grid.size))
    for r, times in enumerate(row):
        if len(times):
            out[r] = _corrected_rows(times, grid, config, g).sum(axis=0) / n
    return out


def pair_stat(row, n, grid, config):
    """Pair surfaces a^{r,r'}(s,t) for one account, shape (R, R, G, G)."""
    R = len(row)
    G = grid.size
    g = edge_correction(grid.points, config)
    f = np.zeros((R, G))
    eg = np.zeros((R, G, G))
    for r, times in enumerate(row):
        if len(times):
            rows = _corrected_rows(times, grid, config, g)
            f[r] = rows.sum(axis=0)
            eg[r] = rows.T @ rows
    out = np.empty((R, R, G, G))
    for r in range(R):
        for rp in range(R):
            surf = np.outer(f[r], f[rp])
            if r == rp:
                surf -= eg[r]
            out[r, rp] = surf / n
    return out


class FourEstimators:
    """Pooled pair-average surfaces over an n x m matrix, each (R, R, G, G).

    same_cell:   same account, same slot, distinct events
    cross_slot:  same account, different slots
    cross_account: different accounts, same slot
    cross_both:  different accounts, different slots

    Under the multi-level model their expectations differ only through
    which random-effect covariances the paired cells share, which is what
    makes the nuisance covariances recoverable from their ratios.
    """

    __slots__ = ("same_cell", "cross_slot", "cross_account", "cross_both")

    def __init__(self, same_cell, cross_slot, cross_account, cross_both):
        self.same_cell = same_cell
        self.cross_slot = cross_slot
        self.cross_account = cross_account
        self.cross_both = cross_both


def four_estimators(matrix, grid, config):
    """Compute the four pooled pair-average surfaces of an n x m matrix.

    Requires n >= 2 and m >= 2 since the cross-account and cross-slot
    averages divide by n(n-1) and m(m-1).  All four are assembled from
    per-cell marginal kernel sums (never a literal quadruple loop).
    """
    n, m, R = matrix.n, matrix.m, matrix.R
    if n < 2 or m < 2:
        raise InsufficientDataError(
            "pair-average estimators need n >= 2 and m >= 2, got n=%d, m=%d"
            % (n, m)
        )
    G = grid.size
    g = edge_correction(grid.points, config)
    cell = np.zeros((n, m, R, G))
    self_gram = np.zeros((R, G, G))
    for r in range(R):
        chunks = []
        index = []
        for i in range(n):
            for j in range(m):
                times, marks = matrix.entry(i, j)
                sel = times[marks == r]
                if len(sel):
                    chunks.append(sel)
                    index.append((i, j, len(sel)))
        if not chunks:
            continue
        rows = _corrected_rows(np.concatenate(chunks), grid, config, g)
        self_gram[r] = rows.T @ rows
        start = 0
        for i, j, length in index:
            cell[i, j, r] = rows[start : start + length].sum(axis=0)
            start += length
    per_account = cell.sum(axis=1)
    per_slot = cell.sum(axis=0)
    total = per_account.sum(axis=0)

    A = np.empty((R, R, G, G))
    B = np.empty((R, R, G, G))
    Cc = np.empty((R, R, G, G))
    D = np.empty((R, R, G, G))
    for r in range(R):
        for rp in range(R):
            pair_diag = np.einsum("ijg,ijh->gh", cell[:, :, r], cell[:, :, rp])
            row_pair = np.einsum("ig,ih->gh", per_account[:, r], per_account[:, rp])
            col_pair = np.einsum("jg,jh->gh", per_slot[:, r], per_slot[:, rp])
            all_pair = np.outer(total[r], total[rp])
            same = pair_diag.copy()
            if r == rp:
                same -= self_gram[r]
            A[r, rp] = same / (n * m)
            B[r, rp] = (row_pair - pair_diag) / (n * m * (m - 1))
            Cc[r, rp] = (col_pair - pair_diag) / (n * (n - 1) * m)
            D[r, rp] = (all_pair - row_pair - col_pair + pair_diag) / (
                n * (n - 1) * m * (m - 1)
            )
    return FourEstimators(A, B, Cc, D)
