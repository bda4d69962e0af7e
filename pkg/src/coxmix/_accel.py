"""Numerical backends for the hot loops.

Two operations dominate fitting cost: evaluating point-process
log-likelihoods of Monte-Carlo latent paths on merged quadrature nodes, and
accumulating kernel rows over events.  Both exist in two implementations, a
numba-compiled one and a pure numpy one, with identical semantics.

The environment variable COXMIX_BACKEND selects the implementation:
"numba" requires numba and fails loudly if unavailable, "numpy" forces the
fallback, and "auto" (default) uses numba when it imports cleanly.
"""

import math
import os
import warnings

import numpy as np

_CLAMP = 30.0  # intensity exponents are clipped to +/- this before exp

_requested = os.environ.get("COXMIX_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    warnings.warn(
        "COXMIX_BACKEND=%r not recognized; using 'auto'" % _requested,
        RuntimeWarning,
    )
    _requested = "auto"

_numba_ok = False
if _requested in ("auto", "numba"):
    try:
        from numba import njit

        _numba_ok = True
    except ImportError:
        if _requested == "numba":
            raise
        _numba_ok = False

BACKEND = "numba" if _numba_ok else "numpy"


def _pp_loglik_numpy(paths, idx, frac, w, delta, seg, n, R, out, chunk=64):
    """Accumulate per-account Poisson path log-likelihoods into ``out``.

    paths : (Q, R, G) latent path values on the grid.
    idx, frac : node interpolation coordinates, concatenated mark-major.
    w, delta : quadrature weight and event multiplicity per node.
    seg : (n*R + 1,) offsets; segment r*n + i holds account i, mark r.
    out : (n, Q) accumulator, updated in place.
    """
    Q = paths.shape[0]
    for r in range(R):
        lo = int(seg[r * n])
        hi = int(seg[(r + 1) * n])
        if hi == lo:
            continue
        ii = idx[lo:hi]
        ff = frac[lo:hi]
        ww = w[lo:hi]
        dd = delta[lo:hi]
        starts = (seg[r * n : (r + 1) * n] - lo).astype(np.intp)
        mark_paths = paths[:, r, :]
        for q0 in range(0, Q, chunk):
            block = mark_paths[q0 : q0 + chunk]
            z = block[:, ii] * (1.0 - ff) + block[:, ii + 1] * ff
            contrib = dd * z - ww * np.exp(np.clip(z, -_CLAMP, _CLAMP))
            out[:, q0 : q0 + chunk] += np.add.reduceat(contrib, starts, axis=1).T
    return out


def _kernel_matrix_numpy(times, grid_points, h, epanechnikov):
    """Rows K_h(grid - t) for each event time t, shape (N, G)."""
    z = (grid_points[None, :] - times[:, None]) / h
    if epanechnikov:
        out = np.where(np.abs(z) < 1.0, 0.75 * (1.0 - z * z), 0.0)
    else:
        out = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    out /= h
    return out


if _numba_ok:

    @njit(cache=True)
    def _pp_loglik_numba(paths, idx, frac, w, delta, seg, n, R, out):
        Q = paths.shape[0]
        for r in range(R):
            for i in range(n):
                k0 = seg[r * n + i]
                k1 = seg[r * n + i + 1]
                for q in range(Q):
                    row = paths[q, r]
                    acc = 0.0
                    for k in range(k0, k1):
                        x = row[idx[k]] * (1.0 - frac[k]) + row[idx[k] + 1] * frac[k]
                        if x > _CLAMP:
                            xe = _CLAMP
                        elif x < -_CLAMP:
                            xe = -_CLAMP
                        else:
                            xe = x
                        acc += delta[k] * x - w[k] * math.exp(xe)
                    out[i, q] += acc
        return out

    @njit(cache=True)
    def _kernel_matrix_numba(times, grid_points, h, epanechnikov):
        N = times.shape[0]
        G = grid_points.shape[0]
        out = np.zeros((N, G))
        for i in range(N):
            t = times[i]
            if epanechnikov:
                for g in range(G):
                    z = (grid_points[g] - t) / h
                    if -1.0 < z < 1.0:
                        out[i, g] = 0.75 * (1.0 - z * z) / h
            else:
                for g in range(G):
                    z = (grid_points[g] - t) / h
                    out[i, g] = math.exp(-0.5 * z * z) / (
                        h * math.sqrt(2.0 * math.pi)
                    )
        return out


def pp_loglik_accumulate(paths, idx, frac, w, delta, seg, n, R, out):
    """Dispatch the path log-likelihood kernel to the active backend."""
    if BACKEND == "numba":
        return _pp_loglik_numba(paths, idx, frac, w, delta, seg, n, R, out)
    return _pp_loglik_numpy(paths, idx, frac, w, delta, seg, n, R, out)


def kernel_matrix(times, grid_points, h, epanechnikov=True):
    """Dispatch the event-by-grid kernel row computation."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    grid_points = np.ascontiguousarray(grid_points, dtype=np.float64)
    if times.size == 0:
        return np.zeros((0, grid_points.shape[0]))
    if BACKEND == "numba":
        return _kernel_matrix_numba(times, grid_points, float(h), epanechnikov)
    return _kernel_matrix_numpy(times, grid_points, float(h), epanechnikov)
