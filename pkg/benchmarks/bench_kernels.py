#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run with the package installed:

    python benchmarks/bench_kernels.py [--repeats 5]

Setting GLIOMOL_DISABLE_NUMBA=1 changes which path the package itself picks
at import time, but this script always times both implementations directly.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gliomol import _kernels


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba is unavailable; nothing to compare")
        return 1

    rng = np.random.default_rng(0)

    # workloads mirror the hot paths: first-conv-layer im2col/col2im on a
    # training batch, and per-pixel pooling of a dense heatmap grid
    xp = rng.random((16, 302, 302, 3))
    cols_shape = _kernels.im2col_numpy(xp[:1], 3, 2).shape
    cols = rng.random((16,) + cols_shape[1:])
    origins = np.stack(np.meshgrid(np.arange(0, 601, 100), np.arange(0, 1351, 100)), -1).reshape(-1, 2).astype(np.int64)
    values = rng.random((origins.shape[0], 4))

    cases = [
        ("im2col 16x302x302x3 k3 s2",
         lambda: _kernels.im2col_numpy(xp, 3, 2),
         lambda: _kernels.im2col_numba(xp, 3, 2)),
        ("col2im 16x151x151x27 k3 s2",
         lambda: _kernels.col2im_add_numpy(cols, xp.shape, 3, 2),
         lambda: _kernels.col2im_add_numba(cols, xp.shape, 3, 2)),
        (f"pool {origins.shape[0]} patches on 900x1650x4",
         lambda: _kernels.pool_accumulate_numpy(origins, values, (900, 1650), 300),
         lambda: _kernels.pool_accumulate_numba(origins, values, (900, 1650), 300)),
    ]

    print(f"{'kernel':40s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, f_numpy, f_numba in cases:
        f_numba()  # JIT warmup
        a, b = f_numpy(), f_numba()
        if isinstance(a, tuple):
            ok = all(np.array_equal(x, y) for x, y in zip(a, b))
        else:
            ok = np.array_equal(a, b)
        t_np = _best_of(f_numpy, args.repeats)
        t_nb = _best_of(f_numba, args.repeats)
        flag = "" if ok else "  MISMATCH"
        print(f"{name:40s} {t_np*1e3:9.1f}ms {t_nb*1e3:9.1f}ms {t_np/t_nb:7.2f}x{flag}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
