#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Run:  python3 benchmarks/bench_kernels.py [--n 20000] [--d 2000] [--steps 20000]

The coordinate-step loop (sdca_epoch) is the hot path of every simulated
run; row_dots and accumulate_cols dominate the per-round gap evaluation.
The first numba call compiles (cached on disk), so each kernel is warmed
before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from acpd import kernels
from acpd.cli import generate_synthetic


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=20000)
    parser.add_argument("--d", type=int, default=2000)
    parser.add_argument("--steps", type=int, default=20000, help="coordinate steps per epoch")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not kernels.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    ds = generate_synthetic(args.n, args.d, density=0.01, noise=0.1, seed=0)
    rng = np.random.default_rng(1)
    w = rng.standard_normal(ds.d)
    alpha = rng.standard_normal(ds.n) * 0.1
    coeffs = rng.standard_normal(ds.n)
    sq = kernels.row_sq_norms_numpy(ds.indptr, ds.values)
    draws = rng.integers(0, ds.n, size=args.steps)
    lam_n = 1e-3 * ds.n

    print(f"n={ds.n} d={ds.d} nnz={ds.values.size} steps={args.steps} "
          f"(best of {args.repeats})")

    cases = [
        ("row_dots", kernels.row_dots_numba, kernels.row_dots_numpy,
         lambda f: f(ds.indptr, ds.indices, ds.values, w)),
        ("accumulate_cols", kernels.accumulate_cols_numba, kernels.accumulate_cols_numpy,
         lambda f: f(ds.indptr, ds.indices, ds.values, coeffs, ds.d)),
        ("row_sq_norms", kernels.row_sq_norms_numba, kernels.row_sq_norms_numpy,
         lambda f: f(ds.indptr, ds.values)),
        ("sdca_epoch", kernels.sdca_epoch_numba, kernels.sdca_epoch_numpy,
         lambda f: f(ds.indptr, ds.indices, ds.values, sq, ds.labels, alpha,
                     draws, w.copy(), 2.0, lam_n)),
    ]

    header = f"{'kernel':<16} {'numba':>10} {'numpy':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, fast, slow, call in cases:
        call(fast)  # warm the JIT
        t_fast = timeit(lambda: call(fast), args.repeats)
        t_slow = timeit(lambda: call(slow), args.repeats)
        print(f"{name:<16} {t_fast * 1e3:>8.2f}ms {t_slow * 1e3:>8.2f}ms "
              f"{t_slow / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
