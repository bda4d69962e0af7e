import subprocess
import sys

import numpy as np
import pytest

from coxmix import _accel
from coxmix.events import RowSet
from coxmix.grid import Grid
from coxmix.quadrature import QuadratureBatch

needs_numba = pytest.mark.skipif(
    _accel.BACKEND != "numba", reason="numba backend not active"
)


def _random_batch(rng, n=5, R=2, T=2.0):
    rows = []
    for _ in range(n):
        rows.append(
            [np.sort(T * (1.0 - rng.random(rng.integers(0, 7)))) for _ in range(R)]
        )
    rowset = RowSet(rows, R, T, pooled_slots=1)
    return QuadratureBatch(rowset, Grid(13, T))


@needs_numba
def test_kernel_matrix_backends_agree(rng):
    times = rng.uniform(0.01, 2.0, size=40)
    grid = np.linspace(0.0, 2.0, 21)
    for h in (0.1, 0.4):
        for flag in (True, False):
            a = _accel._kernel_matrix_numba(times, grid, h, flag)
            b = _accel._kernel_matrix_numpy(times, grid, h, flag)
            assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


@needs_numba
def test_path_loglik_backends_agree(rng):
    batch = _random_batch(rng)
    Q = 24
    paths = rng.normal(0.0, 2.0, size=(Q, 2, 13))
    # one extreme path exercises the exponent clamp in both backends
    paths[0] = 40.0
    paths[1] = -40.0
    out_a = np.zeros((batch.n, Q))
    out_b = np.zeros((batch.n, Q))
    _accel._pp_loglik_numba(
        paths, batch.idx, batch.frac, batch.weights, batch.delta,
        batch.seg, batch.n, 2, out_a,
    )
    _accel._pp_loglik_numpy(
        paths, batch.idx, batch.frac, batch.weights, batch.delta,
        batch.seg, batch.n, 2, out_b,
    )
    assert np.allclose(out_a, out_b, rtol=1e-12, atol=1e-12)


def test_kernel_matrix_empty_times():
    out = _accel.kernel_matrix(np.array([]), np.linspace(0, 2, 5), 0.3)
    assert out.shape == (0, 5)


def _backend_in_subprocess(value):
    code = (
        "import os\n"
        "os.environ['COXMIX_BACKEND'] = %r\n"
        "import warnings\n"
        "with warnings.catch_warnings():\n"
        "    warnings.simplefilter('ignore')\n"
        "    from coxmix import _accel\n"
        "print(_accel.BACKEND)\n" % value
    )
    res = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, timeout=120
    )
    assert res.returncode == 0, res.stderr
    return res.stdout.strip()


def test_env_flag_selects_numpy():
    assert _backend_in_subprocess("numpy") == "numpy"


@needs_numba
def test_env_flag_selects_numba():
    assert _backend_in_subprocess("numba") == "numba"


def test_env_flag_garbage_falls_back_to_auto():
    assert _backend_in_subprocess("sparkles") in ("numba", "numpy")


def test_backends_fit_the_same_model():
    # the fallback must reproduce the compiled backend's likelihood to
    # rounding; run a tiny fit under each backend out of process
    code = (
        "import os, sys\n"
        "os.environ['COXMIX_BACKEND'] = sys.argv[1]\n"
        "from coxmix.esfit import FitConfig, fit\n"
        "from coxmix.events import single_rows\n"
        "from coxmix.simulate import simulate_dataset\n"
        "data = simulate_dataset(C=2, n_per_cluster=6, m=1, R=1, seed=3)\n"
        "cfg = FitConfig(seed=7, grid_size=15, bandwidths=(0.5,),\n"
        "                mc_paths=64, max_iter=3)\n"
        "model = fit(single_rows(data.matrix), 2, cfg)\n"
        "print(repr(model.loglik))\n"
        "print(repr(float(model.params.mu.sum())))\n"
    )
    outs = {}
    for backend in ("numpy", "numba" if _accel.BACKEND == "numba" else "numpy"):
        res = subprocess.run(
            [sys.executable, "-c", code, backend],
            capture_output=True, text=True, timeout=300,
        )
        assert res.returncode == 0, res.stderr
        outs[backend] = [float(v) for v in res.stdout.strip().splitlines()]
    values = list(outs.values())
    assert np.allclose(values[0], values[1], rtol=1e-9)
