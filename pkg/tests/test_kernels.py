import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.stats import norm

from coxmix.exceptions import DataDomainError
from coxmix.kernels import (
    EPANECHNIKOV,
    GAUSSIAN,
    KernelConfig,
    edge_correction,
    kernel_weight,
)


def test_bandwidth_domain():
    KernelConfig(0.4, 2.0)
    with pytest.raises(DataDomainError):
        KernelConfig(1.0, 2.0)  # h = T/2 excluded
    with pytest.raises(DataDomainError):
        KernelConfig(0.0, 2.0)
    with pytest.raises(DataDomainError):
        KernelConfig(0.2, 2.0, kernel="triangular")


def test_epanechnikov_peak_value():
    cfg = KernelConfig(0.5, 2.0)
    # K(0) = 0.75, scaled by 1/h
    assert kernel_weight(0.0, cfg) == pytest.approx(1.5)
    assert kernel_weight(0.5, cfg) == pytest.approx(0.0)
    assert kernel_weight(-0.25, cfg) == pytest.approx(0.75 * 0.75 / 0.5)


def test_kernels_integrate_to_one():
    for name in (EPANECHNIKOV, GAUSSIAN):
        cfg = KernelConfig(0.3, 2.0, kernel=name)
        total, _ = integrate.quad(lambda u: kernel_weight(u, cfg), -3.0, 3.0)
        assert total == pytest.approx(1.0, abs=1e-8)


def test_edge_correction_interior_is_one():
    cfg = KernelConfig(0.4, 2.0)
    x = np.array([0.4, 1.0, 1.6])
    assert np.allclose(edge_correction(x, cfg), 1.0, atol=1e-12)


def test_edge_correction_boundary_half():
    # exactly half the kernel mass sits inside the window at the endpoints
    for name in (EPANECHNIKOV, GAUSSIAN):
        cfg = KernelConfig(0.4, 2.0, kernel=name)
        g = edge_correction(np.array([0.0, 2.0]), cfg)
        assert np.allclose(g, 0.5, atol=1e-9)


def test_edge_correction_epanechnikov_quarter_bandwidth():
    # independent numeric integral at x = h/4
    cfg = KernelConfig(0.4, 2.0)
    want, _ = integrate.quad(lambda t: kernel_weight(0.1 - t, cfg), 0.0, 2.0)
    got = float(edge_correction(np.array([0.1]), cfg)[0])
    assert got == pytest.approx(want, abs=1e-10)


def test_edge_correction_gaussian_matches_normal_cdf():
    cfg = KernelConfig(0.25, 2.0, kernel=GAUSSIAN)
    x = np.array([0.0, 0.1, 0.3, 1.0, 1.9])
    want = norm.cdf((2.0 - x) / 0.25) - norm.cdf(-x / 0.25)
    assert np.allclose(edge_correction(x, cfg), want, atol=1e-9)


def test_edge_correction_outside_window_rejected():
    cfg = KernelConfig(0.4, 2.0)
    with pytest.raises(DataDomainError):
        edge_correction(np.array([-0.01]), cfg)


@given(st.floats(0.0, 2.0))
def test_edge_correction_bounds(x):
    cfg = KernelConfig(0.35, 2.0)
    g = float(edge_correction(np.array([x]), cfg)[0])
    assert 0.5 - 1e-12 <= g <= 1.0 + 1e-12


@given(st.floats(0.0, 2.0))
def test_edge_correction_window_symmetry(x):
    # g(x) = g(T - x) for symmetric kernels
    cfg = KernelConfig(0.35, 2.0)
    a = float(edge_correction(np.array([x]), cfg)[0])
    b = float(edge_correction(np.array([2.0 - x]), cfg)[0])
    assert a == pytest.approx(b, abs=1e-12)
