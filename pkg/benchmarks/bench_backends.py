"""Compare the compiled and pure-numpy versions of the two hot kernels.

Usage: python3 benchmarks/bench_backends.py [--accounts N] [--paths Q]

Times the point-process log-likelihood accumulator and the kernel-weight
matrix builder on a synthetic workload shaped like a real fit.  Useful
when deciding whether the compiled backend is worth its import cost on a
given machine.
"""

import argparse
import time

import numpy as np

from coxmix import _accel


def _workload(accounts, paths, marks=2, grid_size=51, events_per=12, seed=0):
    rng = np.random.default_rng(seed)
    nodes_per = events_per + grid_size
    total = accounts * marks * nodes_per
    idx = rng.integers(0, grid_size - 1, total).astype(np.int64)
    frac = rng.random(total)
    weights = rng.random(total) * 0.04
    delta = (rng.random(total) < 0.2).astype(float)
    seg = np.arange(accounts * marks + 1, dtype=np.int64) * nodes_per
    paths_arr = rng.normal(0.0, 1.0, (paths, marks, grid_size))
    times = np.sort(rng.uniform(0.0, 2.0, accounts * events_per))
    grid_points = np.linspace(0.0, 2.0, grid_size)
    return (paths_arr, idx, frac, weights, delta, seg, accounts, marks), (
        times,
        grid_points,
        0.2,
    )


def _time(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--accounts", type=int, default=200)
    parser.add_argument("--paths", type=int, default=500)
    args = parser.parse_args()

    ll_args, km_args = _workload(args.accounts, args.paths)
    out = np.zeros((args.accounts, args.paths))

    rows = []
    fn = getattr(_accel, "_pp_loglik_numpy")
    rows.append(("loglik  numpy", _time(lambda: fn(*ll_args[:6], ll_args[6], ll_args[7], out))))
    if _accel.BACKEND == "numba":
        jit = getattr(_accel, "_pp_loglik_numba")
        jit(*ll_args[:6], ll_args[6], ll_args[7], out)  # compile
        rows.append(("loglik  numba", _time(lambda: jit(*ll_args[:6], ll_args[6], ll_args[7], out))))

    times, grid_points, h = km_args
    fn = getattr(_accel, "_kernel_matrix_numpy")
    rows.append(("kmatrix numpy", _time(lambda: fn(times, grid_points, h, True))))
    if _accel.BACKEND == "numba":
        jit = getattr(_accel, "_kernel_matrix_numba")
        jit(times, grid_points, h, True)
        rows.append(("kmatrix numba", _time(lambda: jit(times, grid_points, h, True))))

    print("active backend: %s" % _accel.BACKEND)
    print("workload: %d accounts, %d paths" % (args.accounts, args.paths))
    for name, seconds in rows:
        print("%-14s %8.2f ms" % (name, seconds * 1e3))
    if _accel.BACKEND != "numba":
        print("(set COXMIX_BACKEND=numba with numba installed to compare)")


if __name__ == "__main__":
    main()
