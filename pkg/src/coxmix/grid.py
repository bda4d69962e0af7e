"""Uniform evaluation grid on the observation window [0, T].

Curves and surfaces are represented as plain numpy arrays of values on a
shared Grid: a curve is shape (G,), a surface is shape (G, G).  All
smoothing, solving, sampling and quadrature in this package happens on one
of these grids.
"""

import numpy as np

from .exceptions import DataDomainError


class Grid:
    """Uniform grid of ``size`` points on [0, T] including both endpoints.

    Parameters
    ----------
    size : int
        Number of grid points, at least 2.
    horizon : float
        Right endpoint T of the observation window, strictly positive.
    """

    __slots__ = ("size", "horizon", "points", "spacing")

    def __init__(self, size, horizon):
        size = int(size)
        horizon = float(horizon)
        if size < 2:
            raise DataDomainError("grid size must be at least 2, got %d" % size)
        if not np.isfinite(horizon) or horizon <= 0.0:
            raise DataDomainError("horizon must be positive, got %r" % horizon)
        self.size = size
        self.horizon = horizon
        self.points = np.linspace(0.0, horizon, size)
        self.spacing = horizon / (size - 1)

    def __repr__(self):
        return "Grid(size=%d, horizon=%g)" % (self.size, self.horizon)

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and other.size == self.size
            and other.horizon == self.horizon
        )

    def trapezoid_weights(self):
        """Integration weights of the composite trapezoid rule, shape (G,).

        Weights sum exactly to the horizon T.
        """
        w = np.full(self.size, self.spacing)
        w[0] = 0.5 * self.spacing
        w[-1] = 0.5 * self.spacing
        return w

    def locate(self, x):
        """Linear-interpolation coordinates of points ``x`` in [0, T].

        Returns ``(idx, frac)`` with ``idx`` the left cell index in
        [0, G-2] and ``frac`` in [0, 1] such that a curve ``f`` on the grid
        evaluates at x as ``f[idx]*(1-frac) + f[idx+1]*frac``.
        """
        x = np.asarray(x, dtype=float)
        if x.size and (x.min() < 0.0 or x.max() > self.horizon):
            raise DataDomainError("points outside [0, %g]" % self.horizon)
        pos = x / self.spacing
        idx = np.minimum(pos.astype(np.int64), self.size - 2)
        frac = pos - idx
        return idx, frac

    def interpolate(self, values, x):
        """Evaluate grid curves at arbitrary points by linear interpolation.

        ``values`` has shape (..., G); the result has shape (..., len(x)).
        """
        idx, frac = self.locate(x)
        vals = np.asarray(values, dtype=float)
        return vals[..., idx] * (1.0 - frac) + vals[..., idx + 1] * frac

    def integrate(self, values):
        """Trapezoid integral over [0, T] of curves with shape (..., G)."""
        vals = np.asarray(values, dtype=float)
        return vals @ self.trapezoid_weights()
