"""Compiled (numba) vs fallback kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--size 64]

Each kernel is run once untimed so numba compile time is excluded, then the
best of ``--repeat`` runs is reported.  The fallback of the max-flow solver is
the interpreted Python loop; the other kernels fall back to vectorised numpy.
Outputs of both paths are compared and the maximum difference is printed.
"""
import argparse
import time

import numpy as np

from seamweld import _kernels
from seamweld.accel import USE_NUMBA
from seamweld.flow import FlowParams, dense_descriptors
from seamweld.mincut import _neighbours


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def maxflow_case(rng, side):
    n = side * side
    tr = rng.integers(-9, 10, n).astype(np.float64)
    rc = rng.integers(0, 10, (n, 4)).astype(np.float64)
    nbr = _neighbours(np.ones((side, side), dtype=bool))
    rc[nbr < 0] = 0.0
    return tr, rc, nbr


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", type=int, default=64, help="patch side for flow kernels")
    ap.add_argument("--grid", type=int, default=60, help="grid side for max-flow")
    args = ap.parse_args()
    if not USE_NUMBA:
        print("note: SEAMWELD_DISABLE_NUMBA is set; the 'numba' column runs interpreted code")

    rng = np.random.default_rng(0)
    s = args.size
    p = FlowParams()
    d0 = dense_descriptors(rng.random((s, s)))
    d1 = dense_descriptors(rng.random((s, s)))
    cu = np.zeros((s, s), dtype=np.int64)
    cv = np.zeros((s, s), dtype=np.int64)
    cost = _kernels.data_cost_vec(d0, d1, cu, cv, p.radius, p.trunc, p.eta)
    img = rng.random((s * 4, s * 4, 3))
    mask = rng.random((s * 4, s * 4)) > 0.05
    xs = rng.random(s * s * 16) * (s * 4 - 1)
    ys = rng.random(s * s * 16) * (s * 4 - 1)
    tr, rc, nbr = maxflow_case(rng, args.grid)

    def mf(fn):
        return lambda: fn(tr.copy(), rc.copy(), nbr)

    cases = [
        (f"maxflow {args.grid}x{args.grid}", mf(_kernels.grid_maxflow), mf(_kernels.grid_maxflow.py_func),
         lambda a, b: abs(a[0] - b[0])),
        (f"data_cost {s}x{s}", lambda: _kernels.data_cost_loop(d0, d1, cu, cv, p.radius, p.trunc, p.eta),
         lambda: _kernels.data_cost_vec(d0, d1, cu, cv, p.radius, p.trunc, p.eta),
         lambda a, b: float(np.abs(a - b).max())),
        (f"bp {s}x{s} x{p.n_iter}", lambda: _kernels.bp_loop(cost, cu, cv, p.alpha, p.d, p.n_iter),
         lambda: _kernels.bp_vec(cost, cu, cv, p.alpha, p.d, p.n_iter),
         lambda a, b: int((a[0] != b[0]).sum() + (a[1] != b[1]).sum())),
        (f"bilinear {len(xs)} px", lambda: _kernels.bilinear_loop(img, mask, xs, ys),
         lambda: _kernels.bilinear_vec(img, mask, xs, ys),
         lambda a, b: float(np.abs(a[0] - b[0]).max()) + int((a[1] != b[1]).sum())),
    ]
    print(f"{'kernel':<24}{'numba s':>10}{'fallback s':>12}{'speedup':>9}  max diff")
    for name, fast, slow, diff in cases:
        t_fast = best_of(fast, args.repeat)
        t_slow = best_of(slow, max(1, args.repeat if "maxflow" not in name else 1))
        print(f"{name:<24}{t_fast:>10.4f}{t_slow:>12.4f}{t_slow / t_fast:>8.1f}x  {diff(fast(), slow())}")


if __name__ == "__main__":
    main()
