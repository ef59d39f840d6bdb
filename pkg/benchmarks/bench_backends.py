"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the hot pairwise kernels of the package (subordinated-kernel window
assembly, lattice heat-kernel image sums, distance-window evaluation) on
both backends and prints a timing table. Invoke as

    python benchmarks/bench_backends.py [--n 1024] [--repeat 3]

FRACLAP_BACKEND only controls what the library imports; this script always
loads both implementations explicitly.
"""

import argparse
import time

import numpy as np

from fraclap import _accel_np as npk

try:
    from fraclap import _accel_nb as nbk
except ImportError:
    nbk = None


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(n_nodes: int, repeat: int):
    rng = np.random.default_rng(0)
    pos = np.sort(rng.uniform(0.0, 20.0, size=(n_nodes, 1)), axis=0)
    lengths = np.array([20.0])
    mmax = np.array([2], dtype=np.int64)
    a, t_split = 0.8, 4e-4

    dx_pairs = rng.uniform(-10.0, 10.0, size=(n_nodes * 8, 1))
    ts = np.geomspace(1e-3, 2.0, 24)
    d2 = rng.uniform(1e-6, 9.0, n_nodes * n_nodes // 4)

    cases = {
        f"kernel window matrix ({n_nodes}x{n_nodes}, 5 images)":
            lambda mod: mod.torus_smallt_matrix(
                pos, lengths, a, 0.0, t_split, 1e-4, mmax),
        f"heat image sums ({dx_pairs.shape[0]} pairs x {ts.size} times)":
            lambda mod: mod.heat_images(dx_pairs, lengths, ts, mmax),
        f"distance windows ({d2.size} pairs)":
            lambda mod: mod.dist_smallt_pairs(d2, 1.25, 0.0, t_split, 0.0),
    }

    if nbk is not None:
        for make in cases.values():   # compile outside the timing
            make(nbk)

    width = max(len(k) for k in cases)
    print(f"{'kernel':<{width}}  {'numpy':>9}  {'numba':>9}  {'speedup':>8}")
    for name, make in cases.items():
        t_np, ref = _time(lambda: make(npk), repeat)
        if nbk is None:
            print(f"{name:<{width}}  {t_np * 1e3:8.1f}ms  "
                  f"{'-':>9}  {'-':>8}")
            continue
        t_nb, got = _time(lambda: make(nbk), repeat)
        worst = float(np.max(np.abs(np.asarray(got) - np.asarray(ref))
                             / np.maximum(np.abs(np.asarray(ref)), 1e-300)))
        assert worst < 1e-10, f"backend mismatch {worst:.2e} in {name}"
        print(f"{name:<{width}}  {t_np * 1e3:8.1f}ms  {t_nb * 1e3:8.1f}ms"
              f"  {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=1024)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if nbk is None:
        print("numba not importable; timing the numpy fallback only")
    bench(args.n, args.repeat)
