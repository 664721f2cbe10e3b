"""Hot inner-loop kernels with a numba fast path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``GLIOMOL_DISABLE_NUMBA`` is unset (or falsy). Both paths are
written to accumulate in the same order, so results are bit-identical;
``tests/test_kernels.py`` asserts exact equality and
``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _numba_disabled() -> bool:
    return os.environ.get("GLIOMOL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}


try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay importable
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _numba_disabled()


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# im2col / col2im for strided 2-D convolution (NHWC layout, padded input)
# ---------------------------------------------------------------------------

def im2col_numpy(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Gather k*k windows of a padded NHWC batch into columns.

    xp: (B, Hp, Wp, C) -> (B, Ho, Wo, k*k*C), window layout (ki, kj, c).
    """
    b, hp, wp, c = xp.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    sb, sh, sw, sc = xp.strides
    win = as_strided(
        xp,
        shape=(b, ho, wo, k, k, c),
        strides=(sb, sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )
    return win.reshape(b, ho, wo, k * k * c).copy()


def _im2col_loops(xp, k, stride, out):
    b, hp, wp, c = xp.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    for bi in range(b):
        for i in range(ho):
            for j in range(wo):
                col = 0
                for ki in range(k):
                    for kj in range(k):
                        for ci in range(c):
                            out[bi, i, j, col] = xp[bi, i * stride + ki, j * stride + kj, ci]
                            col += 1


def col2im_add_numpy(cols: np.ndarray, xp_shape: tuple, k: int, stride: int) -> np.ndarray:
    """Scatter-add columns back onto a zeroed padded input (im2col adjoint)."""
    b, hp, wp, c = xp_shape
    _, ho, wo, _ = cols.shape
    xp = np.zeros(xp_shape, dtype=cols.dtype)
    cols6 = cols.reshape(b, ho, wo, k, k, c)
    for ki in range(k):
        for kj in range(k):
            xp[:, ki : ki + ho * stride : stride, kj : kj + wo * stride : stride, :] += cols6[:, :, :, ki, kj, :]
    return xp


def _col2im_loops(cols6, xp, k, stride):
    b, ho, wo = cols6.shape[0], cols6.shape[1], cols6.shape[2]
    c = cols6.shape[5]
    # (ki, kj) outermost to match the numpy slice-add accumulation order.
    for ki in range(k):
        for kj in range(k):
            for bi in range(b):
                for i in range(ho):
                    for j in range(wo):
                        for ci in range(c):
                            xp[bi, i * stride + ki, j * stride + kj, ci] += cols6[bi, i, j, ki, kj, ci]


# ---------------------------------------------------------------------------
# Per-pixel accumulation of overlapping patch predictions
# ---------------------------------------------------------------------------

def pool_accumulate_numpy(
    origins: np.ndarray, values: np.ndarray, dims: tuple, patch: int
) -> tuple[np.ndarray, np.ndarray]:
    """Sum per-patch value vectors over every pixel each patch covers.

    origins: (P, 2) int64 top-left corners; values: (P, L).
    Returns (sums (H, W, L), counts (H, W) int64).
    """
    h, w = dims
    p, l = values.shape
    sums = np.zeros((h, w, l), dtype=np.float64)
    counts = np.zeros((h, w), dtype=np.int64)
    for i in range(p):
        y, x = int(origins[i, 0]), int(origins[i, 1])
        sums[y : y + patch, x : x + patch, :] += values[i]
        counts[y : y + patch, x : x + patch] += 1
    return sums, counts


def _pool_loops(origins, values, sums, counts, patch):
    p, l = values.shape
    for i in range(p):
        y = origins[i, 0]
        x = origins[i, 1]
        for dy in range(patch):
            for dx in range(patch):
                counts[y + dy, x + dx] += 1
                for li in range(l):
                    sums[y + dy, x + dx, li] += values[i, li]


if HAVE_NUMBA:
    _im2col_jit = njit(cache=True)(_im2col_loops)
    _col2im_jit = njit(cache=True)(_col2im_loops)
    _pool_jit = njit(cache=True)(_pool_loops)

    def im2col_numba(xp, k, stride):
        b, hp, wp, c = xp.shape
        ho = (hp - k) // stride + 1
        wo = (wp - k) // stride + 1
        out = np.empty((b, ho, wo, k * k * c), dtype=xp.dtype)
        _im2col_jit(xp, k, stride, out)
        return out

    def col2im_add_numba(cols, xp_shape, k, stride):
        b, hp, wp, c = xp_shape
        _, ho, wo, _ = cols.shape
        xp = np.zeros(xp_shape, dtype=cols.dtype)
        _col2im_jit(cols.reshape(b, ho, wo, k, k, c), xp, k, stride)
        return xp

    def pool_accumulate_numba(origins, values, dims, patch):
        h, w = dims
        p, l = values.shape
        sums = np.zeros((h, w, l), dtype=np.float64)
        counts = np.zeros((h, w), dtype=np.int64)
        _pool_jit(np.ascontiguousarray(origins), np.ascontiguousarray(values), sums, counts, patch)
        return sums, counts


if USE_NUMBA:
    im2col = im2col_numba
    col2im_add = col2im_add_numba
    pool_accumulate = pool_accumulate_numba
else:
    im2col = im2col_numpy
    col2im_add = col2im_add_numpy
    pool_accumulate = pool_accumulate_numpy
