#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

    python3 benchmarks/bench_accel.py [--repeat N]

The same selection can be forced at runtime with VISTA_PURE_NUMPY=1.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from vista import accel


def timeit(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kl(repeat):
    rng = np.random.default_rng(0)
    stack = rng.random((5000, 1024))
    stack /= stack.sum(axis=1, keepdims=True)
    rows = [("kl_consecutive 5000x1024", accel.kl_consecutive_numpy, stack, 1e-10)]
    if accel.HAS_NUMBA:
        accel.kl_consecutive_numba(stack[:4], 1e-10)  # compile
        rows.append(("kl_consecutive 5000x1024 [numba]", accel.kl_consecutive_numba, stack, 1e-10))
    return [(name, timeit(fn, *args, repeat=repeat)) for name, fn, *args in rows]


def bench_lcs(repeat):
    rng = np.random.default_rng(1)
    seqs = [rng.integers(0, 50, size=rng.integers(10, 40)) for _ in range(300)]
    lens = np.array([len(s) for s in seqs], dtype=np.int64)
    mat = np.zeros((len(seqs), int(lens.max())), dtype=np.int64)
    for i, s in enumerate(seqs):
        mat[i, : len(s)] = s
    rows = [("lcs_batch 300x300 pairs", accel.lcs_batch_numpy, mat, lens, mat, lens)]
    if accel.HAS_NUMBA:
        accel.lcs_batch_numba(mat[:2], lens[:2], mat[:2], lens[:2])  # compile
        rows.append(("lcs_batch 300x300 pairs [numba]", accel.lcs_batch_numba, mat, lens, mat, lens))
    return [(name, timeit(fn, *args, repeat=repeat)) for name, fn, *args in rows]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    print(f"numba available: {accel.HAS_NUMBA}; selected path: "
          f"{'numba' if accel.USING_NUMBA else 'numpy'}")
    results = bench_kl(args.repeat) + bench_lcs(args.repeat)
    width = max(len(name) for name, _ in results)
    for name, seconds in results:
        print(f"{name:<{width}}  {seconds * 1000:10.2f} ms")
    pairs = {}
    for name, seconds in results:
        key = name.replace(" [numba]", "")
        pairs.setdefault(key, {})["numba" if "[numba]" in name else "numpy"] = seconds
    for key, row in pairs.items():
        if "numba" in row and "numpy" in row:
            print(f"{key}: numba is {row['numpy'] / row['numba']:.1f}x the numpy path")


if __name__ == "__main__":
    main()
