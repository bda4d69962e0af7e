import numpy as np
import pytest

from coxmix.events import SequenceMatrix


@pytest.fixture
def tiny_matrix():
    """2x2 matrix, 2 marks, a handful of hand-placed events."""
    records = [
        (0, 0, 0.4, 1),
        (0, 0, 1.3, 2),
        (0, 1, 0.9, 1),
        (1, 0, 0.2, 2),
        (1, 1, 1.7, 1),
        (1, 1, 1.9, 2),
    ]
    return SequenceMatrix.from_records(2, 2, 2, 2.0, records)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def max_estimating_residual(posterior, stats):
    """Largest absolute defect of the solution-step estimating equations.

    Re-solves the step, reconstructs both equation sides and reports the
    worst gap over entries where no floor or clamp was applied (floored
    and clamped entries are repaired values, not solutions).
    """
    from coxmix.esfit import (
        _GAMMA_CLAMP,
        first_order_intensity,
        s_step,
    )

    params, mask_a, mask_b = s_step(posterior, stats, return_masks=True)
    R, G = stats.R, stats.grid.size
    rr = np.arange(R)[:, None]
    gg = np.arange(G)[None, :]
    worst = 0.0
    for c in range(params.C):
        w = posterior[:, c]
        EB = stats.weighted_point_sum(w)
        EA = stats.weighted_pair_sum(w)
        gam = params.gamma[c]
        rho = first_order_intensity(params.mu[c], gam[rr, rr, gg, gg])
        free = np.abs(gam) < _GAMMA_CLAMP - 1e-9
        ok_point = mask_b[c] & mask_a[c][rr, rr, gg, gg] & free[rr, rr, gg, gg]
        if ok_point.any():
            gap = np.abs(params.pi[c] * rho - EB)[ok_point].max()
            worst = max(worst, float(gap))
        ok_pair = (
            mask_a[c]
            & free
            & ok_point[:, None, :, None]
            & ok_point[None, :, None, :]
        )
        if ok_pair.any():
            two = params.pi[c] * (
                rho[:, None, :, None] * rho[None, :, None, :] * np.exp(gam)
            )
            gap = np.abs(two - EA)[ok_pair].max()
            worst = max(worst, float(gap))
    return worst
