import numpy as np
import pytest
from scipy.special import roots_hermite

from coxmix.events import RowSet
from coxmix.exceptions import DataDomainError
from coxmix.fpca import assemble_score_cov, eigendecompose, truncate
from coxmix.grid import Grid
from coxmix.quadrature import (
    QuadratureBatch,
    QuadratureScheme,
    build_quadrature,
    mc_loglik,
    poisson_loglik,
)

GRID = Grid(51, 2.0)


def test_no_events_weights_are_trapezoid():
    mq = build_quadrature(np.array([]), Grid(3, 2.0))
    assert np.allclose(mq.nodes, [0.0, 1.0, 2.0])
    assert np.allclose(mq.weights, [0.5, 1.0, 0.5])
    assert mq.delta.sum() == 0.0


def test_event_on_grid_node_merges():
    mq = build_quadrature(np.array([1.0]), Grid(3, 2.0))
    assert len(mq.nodes) == 3
    assert mq.delta[1] == 1.0


def test_duplicate_events_stack_multiplicity():
    mq = build_quadrature(np.array([0.7, 0.7]), Grid(3, 2.0))
    k = int(np.searchsorted(mq.nodes, 0.7))
    assert mq.delta[k] == 2.0


def test_weights_sum_to_horizon():
    mq = build_quadrature(np.array([0.4, 1.3]), Grid(5, 2.0))
    assert mq.weights.sum() == pytest.approx(2.0, abs=1e-12)
    assert (mq.delta[np.searchsorted(mq.nodes, [0.4, 1.3])] == 1.0).all()


def test_events_outside_window_rejected():
    with pytest.raises(DataDomainError):
        build_quadrature(np.array([0.0]), Grid(3, 2.0))
    with pytest.raises(DataDomainError):
        build_quadrature(np.array([2.5]), Grid(3, 2.0))


def test_zero_path_no_events():
    # integral of exp(0) over [0, 2] for each of R marks
    scheme = QuadratureScheme.for_row([np.array([]), np.array([])], GRID)
    assert poisson_loglik(scheme, np.zeros((2, 51))) == pytest.approx(-4.0, abs=1e-12)


def test_single_event_zero_path():
    scheme = QuadratureScheme.for_row([np.array([1.0])], GRID)
    assert poisson_loglik(scheme, np.zeros((1, 51))) == pytest.approx(-2.0, abs=1e-12)


def test_homogeneous_poisson_closed_form():
    # N events under constant log-intensity mu: N mu - T exp(mu)
    rng = np.random.default_rng(8)
    events = np.sort(rng.uniform(0.01, 2.0, 17))
    scheme = QuadratureScheme.for_row([events], GRID)
    mu = 1.3
    want = 17 * mu - 2.0 * np.exp(mu)
    got = poisson_loglik(scheme, np.full((1, 51), mu))
    assert got == pytest.approx(want, abs=1e-6)


def test_path_shape_validated():
    scheme = QuadratureScheme.for_row([np.array([0.5])], GRID)
    with pytest.raises(DataDomainError):
        poisson_loglik(scheme, np.zeros((2, 51)))


def test_exponent_clipped_against_overflow():
    scheme = QuadratureScheme.for_row([np.array([0.5])], GRID)
    out = poisson_loglik(scheme, np.full((1, 51), 500.0))
    assert np.isfinite(out)


def _one_mode_setup(var):
    t = GRID.points
    phi = np.full(51, np.sqrt(0.5))  # unit L2 norm on [0, 2]
    gamma = var * np.outer(phi, phi)
    bases = [truncate(eigendecompose(gamma, GRID), 1.0)]
    cov = assemble_score_cov(gamma[None, None], bases)
    return bases, cov


def test_mc_loglik_zero_covariance_is_exact():
    bases, cov = _one_mode_setup(0.0)
    events = np.array([0.3, 1.2])
    scheme = QuadratureScheme.for_row([events], GRID)
    means = np.full((1, 51), 0.4)
    want = poisson_loglik(scheme, means)
    for Q in (1, 7):
        got = mc_loglik(scheme, means, cov, bases, Q, seed=5)
        assert got == pytest.approx(want, abs=1e-12)


def test_mc_loglik_matches_gauss_hermite():
    """Single random score: the marginal likelihood is a 1-D integral."""
    var = 0.09
    bases, cov = _one_mode_setup(var)
    events = np.array([0.4, 0.9, 1.6])
    scheme = QuadratureScheme.for_row([events], GRID)
    means = np.zeros((1, 51))

    # independent oracle: E[exp(loglik)] under score xi ~ N(0, var) via
    # Gauss-Hermite quadrature, loglik(xi) = N*c*xi - T*exp(c*xi) with
    # c = sqrt(0.5) the constant eigenfunction value
    c = np.sqrt(0.5)
    nodes, weights = roots_hermite(80)
    xs = np.sqrt(2.0 * var) * nodes
    f = np.exp(3 * c * xs - 2.0 * np.exp(c * xs))
    want = np.log(np.sum(weights * f) / np.sqrt(np.pi))

    got = mc_loglik(scheme, means, cov, bases, 200000, seed=11)
    assert got == pytest.approx(want, abs=0.01)


def test_batch_matches_scalar_path():
    rows = RowSet(
        [
            [np.array([0.4, 1.1]), np.array([0.9])],
            [np.array([]), np.array([0.6, 1.5, 1.9])],
        ],
        2,
        2.0,
    )
    batch = QuadratureBatch(rows, GRID)
    rng = np.random.default_rng(2)
    paths = rng.normal(0.0, 0.3, (4, 2, 51))
    out = batch.loglik_matrix(paths)
    assert out.shape == (2, 4)
    for i in range(2):
        scheme = QuadratureScheme.for_row(rows.rows[i], GRID)
        for q in range(4):
            assert out[i, q] == pytest.approx(
                poisson_loglik(scheme, paths[q]), abs=1e-9
            )
