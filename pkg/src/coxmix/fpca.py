"""Karhunen-Loeve machinery on grid-sampled covariance surfaces.

A covariance surface Gamma(s,t) on the grid is turned into eigenvalues and
L2-orthonormal eigenfunctions by solving the discretized integral
eigenproblem in its symmetric weighted form: eigendecompose
W^{1/2} Gamma W^{1/2} with W the diagonal of trapezoid weights, then map
eigenvectors back by W^{-1/2}.  Truncated bases from the per-type diagonal
surfaces, plus cross-type score covariances projected from the Gamma^{r,r'}
surfaces, define the finite-dimensional Gaussian law used both to sample
latent intensity paths and to count effective parameters.
"""

import numpy as np

from .exceptions import DataDomainError

__all__ = [
    "FpcaBasis",
    "ScoreCovariance",
    "eigendecompose",
    "truncate",
    "assemble_score_cov",
    "sample_paths",
    "reconstruct",
]

_SYMMETRY_TOL = 1e-8
_PSD_REPAIR_TOL = 1e-12


class FpcaBasis:
    """Eigenvalues (descending, >= 0) and eigenfunctions on a grid.

    ``functions`` has shape (rank, G); rows are orthonormal in L2[0, T]
    under trapezoid quadrature.
    """

    __slots__ = ("eigenvalues", "functions", "grid")

    def __init__(self, eigenvalues, functions, grid):
        self.eigenvalues = eigenvalues
        self.functions = functions
        self.grid = grid

    @property
    def rank(self):
        return len(self.eigenvalues)


class ScoreCovariance:
    """Block covariance of stacked per-type scores.

    ``ranks[r]`` gives each type's block size; block (r, r') occupies the
    corresponding slice of ``matrix``.
    """

    __slots__ = ("matrix", "ranks", "offsets")

    def __init__(self, matrix, ranks):
        self.matrix = matrix
        self.ranks = tuple(int(p) for p in ranks)
        offsets = np.zeros(len(self.ranks) + 1, dtype=np.intp)
        np.cumsum(self.ranks, out=offsets[1:])
        self.offsets = offsets

    @property
    def total_rank(self):
        return int(self.offsets[-1])

    def block(self, r, rp):
        return self.matrix[
            self.offsets[r] : self.offsets[r + 1],
            self.offsets[rp] : self.offsets[rp + 1],
        ]


def eigendecompose(gamma, grid):
    """Solve the discretized eigenproblem of a symmetric surface.

    Returns the full-rank basis with negative eigenvalues clipped to zero
    and eigenfunctions scaled so their trapezoid L2 norm is 1.  The input
    must be symmetric within 1e-8.
    """
    gamma = np.asarray(gamma, dtype=float)
    G = grid.size
    if gamma.shape != (G, G):
        raise DataDomainError(
            "surface shape %s does not match grid size %d" % (gamma.shape, G)
        )
    if np.max(np.abs(gamma - gamma.T)) > _SYMMETRY_TOL:
        raise DataDomainError("covariance surface is not symmetric")
    sqw = np.sqrt(grid.trapezoid_weights())
    sym = sqw[:, None] * gamma * sqw[None, :]
    sym = 0.5 * (sym + sym.T)
    evals, evecs = np.linalg.eigh(sym)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    funcs = (evecs[:, order] / sqw[:, None]).T
    # fix a sign convention so decompositions are comparable across runs
    for k in range(funcs.shape[0]):
        peak = np.argmax(np.abs(funcs[k]))
        if funcs[k, peak] < 0:
            funcs[k] = -funcs[k]
    return FpcaBasis(evals, funcs, grid)


def truncate(basis, energy):
    """Keep the smallest leading rank capturing ``energy`` of the spectrum.

    ``energy`` lies in (0, 1].  An all-zero spectrum yields rank 1 with a
    zero eigenvalue (a degenerate flat process).
    """
    if not 0.0 < energy <= 1.0:
        raise DataDomainError("energy fraction must lie in (0, 1], got %r" % energy)
    total = basis.eigenvalues.sum()
    if total <= 0.0:
        return FpcaBasis(basis.eigenvalues[:1], basis.functions[:1], basis.grid)
    fractions = np.cumsum(basis.eigenvalues) / total
    p = int(np.searchsorted(fractions, energy - 1e-12)) + 1
    p = min(max(p, 1), basis.rank)
    return FpcaBasis(basis.eigenvalues[:p], basis.functions[:p], basis.grid)


def assemble_score_cov(gamma, bases):
    """Build the stacked score covariance from cross-type surfaces.

    ``gamma`` has shape (R, R, G, G); only its off-diagonal (r, r') blocks
    are read.  Diagonal blocks of the result are diag(eigenvalues) from
    each basis; off-diagonal blocks project Gamma^{r,r'} onto the retained
    eigenfunction pairs by double trapezoid quadrature.  If the assembled
    matrix has eigenvalues below -1e-12 it is repaired by clipping its
    spectrum at zero (the blockwise construction does not guarantee PSD).
    """
    R = len(bases)
    gamma = np.asarray(gamma, dtype=float)
    G = bases[0].grid.size
    if gamma.shape != (R, R, G, G):
        raise DataDomainError(
            "cross-surface array shape %s does not match R=%d, G=%d"
            % (gamma.shape, R, G)
        )
    for basis in bases:
        if basis.grid.size != G:
            raise DataDomainError("bases must share one grid")
    ranks = [basis.rank for basis in bases]
    offsets = np.concatenate([[0], np.cumsum(ranks)])
    P = int(offsets[-1])
    w = bases[0].grid.trapezoid_weights()
    weighted = [basis.functions * w[None, :] for basis in bases]
    matrix = np.zeros((P, P))
    for r in range(R):
        sl = slice(offsets[r], offsets[r + 1])
        matrix[sl, sl] = np.diag(bases[r].eigenvalues)
        for rp in range(r + 1, R):
            slp = slice(offsets[rp], offsets[rp + 1])
            block = weighted[r] @ gamma[r, rp] @ weighted[rp].T
            matrix[sl, slp] = block
            matrix[slp, sl] = block.T
    evals = np.linalg.eigvalsh(matrix)
    if evals[0] < -_PSD_REPAIR_TOL:
        vals, vecs = np.linalg.eigh(matrix)
        vals = np.clip(vals, 0.0, None)
        matrix = (vecs * vals) @ vecs.T
        matrix = 0.5 * (matrix + matrix.T)
    return ScoreCovariance(matrix, ranks)


def sample_paths(means, sigma, bases, Q, seed):
    """Draw Q latent paths, shape (Q, R, G).

    Each path is mean + sum_k xi_k phi_k per type, with the stacked score
    vector xi ~ N(0, sigma) drawn through the symmetric eigenvalue square
    root (well-defined for singular covariances).  ``seed`` may be an int,
    a SeedSequence or a Generator; results are deterministic given a seed.
    """
    means = np.asarray(means, dtype=float)
    R = len(bases)
    G = bases[0].grid.size
    if means.shape != (R, G):
        raise DataDomainError(
            "means shape %s does not match R=%d, G=%d" % (means.shape, R, G)
        )
    if int(Q) < 1:
        raise DataDomainError("need Q >= 1 path samples")
    if sigma.total_rank != sum(b.rank for b in bases):
        raise DataDomainError("score covariance size does not match bases")
    sym = 0.5 * (sigma.matrix + sigma.matrix.T)
    evals, evecs = np.linalg.eigh(sym)
    if evals.size and evals[0] < -1e-8:
        raise DataDomainError(
            "score covariance is not positive semidefinite (min eigenvalue %g)"
            % evals[0]
        )
    root = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T
    rng = np.random.default_rng(seed)
    scores = rng.standard_normal((int(Q), sigma.total_rank)) @ root
    paths = np.empty((int(Q), R, G))
    for r in range(R):
        block = scores[:, sigma.offsets[r] : sigma.offsets[r + 1]]
        paths[:, r, :] = means[r][None, :] + block @ bases[r].functions
    return paths


def reconstruct(basis):
    """Surface sum_k eta_k phi_k(s) phi_k(t) implied by a basis."""
    return (basis.functions.T * basis.eigenvalues) @ basis.functions
