"""The numba fast path and the numpy fallback must agree bit for bit."""

import numpy as np
import pytest

from gliomol import _kernels

pytestmark = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba unavailable")

rng = np.random.default_rng(7)


@pytest.mark.parametrize("shape,k,stride", [
    ((2, 12, 14, 3), 3, 2),
    ((1, 8, 8, 1), 3, 1),
    ((3, 21, 17, 5), 3, 2),
])
def test_im2col_paths_identical(shape, k, stride):
    xp = rng.random(shape)
    np.testing.assert_array_equal(
        _kernels.im2col_numpy(xp, k, stride), _kernels.im2col_numba(xp, k, stride)
    )


@pytest.mark.parametrize("shape,k,stride", [
    ((2, 12, 14, 3), 3, 2),
    ((1, 9, 9, 2), 3, 1),
])
def test_col2im_paths_identical(shape, k, stride):
    xp = rng.random(shape)
    cols = rng.random(_kernels.im2col_numpy(xp, k, stride).shape)
    a = _kernels.col2im_add_numpy(cols, shape, k, stride)
    b = _kernels.col2im_add_numba(cols, shape, k, stride)
    np.testing.assert_array_equal(a, b)


def test_col2im_is_im2col_adjoint():
    # <im2col(x), c> == <x, col2im(c)> characterizes the adjoint exactly
    shape, k, stride = (2, 10, 12, 3), 3, 2
    x = rng.random(shape)
    cols = rng.random(_kernels.im2col_numpy(x, k, stride).shape)
    lhs = float((_kernels.im2col_numpy(x, k, stride) * cols).sum())
    rhs = float((x * _kernels.col2im_add_numpy(cols, shape, k, stride)).sum())
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_pool_accumulate_paths_identical():
    origins = np.array([[0, 0], [3, 5], [6, 2], [3, 5]], dtype=np.int64)
    values = rng.random((4, 3))
    s1, c1 = _kernels.pool_accumulate_numpy(origins, values, (20, 22), 8)
    s2, c2 = _kernels.pool_accumulate_numba(origins, values, (20, 22), 8)
    np.testing.assert_array_equal(s1, s2)
    np.testing.assert_array_equal(c1, c2)


def test_backend_reports_selection():
    assert _kernels.backend() in {"numba", "numpy"}
    assert (_kernels.backend() == "numba") == _kernels.USE_NUMBA
