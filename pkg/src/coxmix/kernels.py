"""Smoothing kernels and boundary correction.

The default kernel is Epanechnikov, K(z) = 0.75 (1 - z^2) on [-1, 1]; a
Gaussian kernel is available behind the same interface.  ``kernel_weight``
evaluates the scaled kernel K_h(u) = K(u / h) / h and ``edge_correction``
evaluates g(x; h) = integral_0^T K_h(x - t) dt, the mass of the kernel that
stays inside the observation window.  Dividing kernel sums by g removes the
downward bias of estimates near the window boundary; g equals 1 in the
interior and 1/2 exactly at the endpoints for symmetric kernels.
"""

import numpy as np

from .exceptions import DataDomainError

EPANECHNIKOV = "epanechnikov"
GAUSSIAN = "gaussian"
KERNEL_NAMES = (EPANECHNIKOV, GAUSSIAN)

# node count for the quadrature fallback used by non-Epanechnikov kernels
_EDGE_QUAD_POINTS = 64
# effective half-support of the Gaussian kernel in bandwidth units
_GAUSS_SUPPORT = 8.0


class KernelConfig:
    """Kernel family, bandwidth and observation horizon.

    The bandwidth must satisfy 0 < h < T/2 so that the kernel never spans
    more than half the window.
    """

    __slots__ = ("kernel", "bandwidth", "horizon")

    def __init__(self, bandwidth, horizon, kernel=EPANECHNIKOV):
        bandwidth = float(bandwidth)
        horizon = float(horizon)
        if kernel not in KERNEL_NAMES:
            raise DataDomainError(
                "unknown kernel %r; choose one of %s" % (kernel, (KERNEL_NAMES,))
            )
        if not np.isfinite(horizon) or horizon <= 0.0:
            raise DataDomainError("horizon must be positive, got %r" % horizon)
        if not np.isfinite(bandwidth) or not 0.0 < bandwidth < 0.5 * horizon:
            raise DataDomainError(
                "bandwidth must lie in (0, T/2) = (0, %g), got %r"
                % (0.5 * horizon, bandwidth)
            )
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.horizon = horizon

    def __repr__(self):
        return "KernelConfig(bandwidth=%g, horizon=%g, kernel=%r)" % (
            self.bandwidth,
            self.horizon,
            self.kernel,
        )


def _epanechnikov(z):
    return np.where(np.abs(z) < 1.0, 0.75 * (1.0 - z * z), 0.0)


def _epanechnikov_cdf(z):
    # integral of K from -1 to z, clamped to the support
    z = np.clip(z, -1.0, 1.0)
    return 0.75 * (z - z**3 / 3.0) + 0.5


def _gaussian(z):
    return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def kernel_weight(u, config):
    """Scaled kernel K_h(u) = K(u / h) / h, vectorized over ``u``."""
    u = np.asarray(u, dtype=float)
    h = config.bandwidth
    if config.kernel == EPANECHNIKOV:
        return _epanechnikov(u / h) / h
    return _gaussian(u / h) / h


def edge_correction(x, config):
    """Boundary mass g(x; h) = integral over [0, T] of K_h(x - t) dt.

    Evaluated in closed form for the Epanechnikov kernel and with 64-point
    Gauss-Legendre quadrature on the effective kernel support for other
    kernels.  ``x`` must lie inside [0, T].
    """
    x = np.asarray(x, dtype=float)
    if x.size and (x.min() < 0.0 or x.max() > config.horizon):
        raise DataDomainError("evaluation points outside [0, %g]" % config.horizon)
    h = config.bandwidth
    T = config.horizon
    if config.kernel == EPANECHNIKOV:
        return _epanechnikov_cdf(x / h) - _epanechnikov_cdf((x - T) / h)
    # clip the integration range to where the kernel carries mass
    lo = np.maximum(0.0, x - _GAUSS_SUPPORT * h)
    hi = np.minimum(T, x + _GAUSS_SUPPORT * h)
    nodes, weights = np.polynomial.legendre.leggauss(_EDGE_QUAD_POINTS)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    # t has shape x.shape + (nodes,)
    t = mid[..., None] + half[..., None] * nodes
    vals = kernel_weight(x[..., None] - t, config)
    return (vals * weights).sum(axis=-1) * half
