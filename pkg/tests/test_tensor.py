"""Autodiff core: primitives, gradients vs finite differences, attention."""

import numpy as np
import pytest

from gliomol.autodiff import (
    GradientError,
    LayerNorm,
    Linear,
    MultiHeadAttention,
    Tensor,
    add,
    backward,
    clip,
    concat,
    conv2d,
    l2_normalize,
    matmul,
    mul,
    power,
    relu,
    reverse_grad,
    reshape,
    sigmoid,
    softmax,
    take,
    take_rows,
    texp,
    tlog,
    tmean,
    transpose,
    tsum,
)

from oracles import finite_difference_check

rng = np.random.default_rng(1234)


class TestReverseGrad:
    def test_sum_gradient_is_ones(self):
        p = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        (g,) = reverse_grad(tsum(p), [p])
        np.testing.assert_array_equal(g, [1.0, 1.0, 1.0])

    def test_quadratic_gradient(self):
        p = Tensor(np.array([2.0, 0.0, -1.0]), requires_grad=True)
        (g,) = reverse_grad(tsum(mul(p, p)), [p])
        np.testing.assert_array_equal(g, [4.0, 0.0, -2.0])

    def test_shared_subexpressions_accumulate(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        y = mul(x, x)  # x^2
        z = mul(y, y)  # x^4
        (g,) = reverse_grad(z, [x])
        assert g == pytest.approx(4 * 3**3)

    def test_non_scalar_loss_rejected(self):
        p = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(GradientError):
            reverse_grad(mul(p, 2.0), [p])

    def test_off_tape_param_rejected(self):
        p = Tensor(np.ones(3), requires_grad=True)
        q = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(GradientError):
            reverse_grad(tsum(p), [q])


class TestFiniteDifferences:
    """Every differentiable op, composed randomly, at rel. err <= 1e-5."""

    def test_elementwise_chain(self):
        x = Tensor(rng.uniform(0.5, 2.0, size=(4, 5)), requires_grad=True)

        def loss():
            return tsum(mul(texp(mul(x, 0.3)), tlog(add(power(x, 2.0), 1.0))))

        assert finite_difference_check(loss, [x]) <= 1e-5

    def test_matmul_2d_and_batched(self):
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
        c = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)

        def loss():
            y = matmul(a, b)
            z = matmul(c, b)  # batched against shared 2-D weight
            return tsum(mul(y, y)) + tsum(mul(z, z))

        assert finite_difference_check(loss, [a, b, c]) <= 1e-5

    def test_softmax_relu_sigmoid(self):
        x = Tensor(rng.standard_normal((3, 6)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 6)))

        def loss():
            s = softmax(mul(x, 3.0), axis=-1)
            return tsum(mul(s, w)) + tsum(relu(x)) + tsum(sigmoid(x))

        assert finite_difference_check(loss, [x]) <= 1e-5

    def test_reshape_transpose_concat_take(self):
        x = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
        y = Tensor(rng.standard_normal((2, 6)), requires_grad=True)

        def loss():
            joined = concat([x, y], axis=0)
            t = transpose(joined)
            r = reshape(t, (3, 12))
            picked = take_rows(r, np.array([0, 2, 2, 1]))
            sliced = take(picked, (slice(None), slice(2, 9)))
            return tsum(mul(sliced, sliced))

        assert finite_difference_check(loss, [x, y]) <= 1e-5

    def test_conv2d(self):
        x = Tensor(rng.standard_normal((2, 9, 9, 3)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 3, 3, 4)) * 0.4, requires_grad=True)
        b = Tensor(rng.standard_normal(4) * 0.1, requires_grad=True)

        def loss():
            return tsum(power(relu(conv2d(x, w, b, stride=2, pad=1)), 2.0))

        assert finite_difference_check(loss, [x, w, b]) <= 1e-5

    def test_layernorm_and_l2norm(self):
        ln = LayerNorm(7)
        x = Tensor(rng.standard_normal((5, 7)), requires_grad=True)
        w = Tensor(rng.standard_normal((5, 7)))

        def loss():
            return tsum(mul(ln(x), w)) + tsum(mul(l2_normalize(x, axis=-1), w))

        assert finite_difference_check(loss, [x] + ln.parameters()) <= 1e-5

    def test_clip_gradient_gates(self):
        x = Tensor(np.array([-1.0, 0.2, 0.8, 2.0]), requires_grad=True)
        (g,) = reverse_grad(tsum(clip(x, 0.0, 1.0)), [x])
        np.testing.assert_array_equal(g, [0.0, 1.0, 1.0, 0.0])


class TestDeterminismAndFiniteness:
    def test_forward_deterministic(self):
        x = rng.standard_normal((2, 8, 8, 3))
        w = rng.standard_normal((3, 3, 3, 4))
        b = rng.standard_normal(4)
        out1 = conv2d(Tensor(x), Tensor(w), Tensor(b)).data
        out2 = conv2d(Tensor(x), Tensor(w), Tensor(b)).data
        np.testing.assert_array_equal(out1, out2)

    def test_outputs_finite(self):
        x = Tensor(rng.standard_normal((4, 16)), requires_grad=True)
        lin = Linear(16, 8, rng)
        out = softmax(lin(x), axis=-1)
        loss = tsum(mul(out, out))
        grads = reverse_grad(loss, [x] + lin.parameters())
        assert np.isfinite(out.data).all()
        assert all(np.isfinite(g).all() for g in grads)


class TestMultiHeadAttention:
    def _identity_attention(self, dim, heads):
        mha = MultiHeadAttention(dim, heads, rng)
        eye = np.eye(dim)
        for lin in (mha.wq, mha.wk, mha.wv, mha.wo):
            lin.w.data[...] = eye
            lin.b.data[...] = 0.0
        return mha

    def test_single_token_identity_projections(self):
        mha = self._identity_attention(4, 1)
        tok = rng.standard_normal((1, 4))
        out = mha(Tensor(tok))
        np.testing.assert_allclose(out.data, tok, atol=1e-12)

    def test_two_identical_tokens(self):
        mha = self._identity_attention(4, 1)
        t = rng.standard_normal(4)
        out = mha(Tensor(np.stack([t, t])))
        np.testing.assert_allclose(out.data, np.stack([t, t]), atol=1e-12)

    def test_rows_are_distributions(self):
        mha = MultiHeadAttention(8, 2, rng)
        mha(Tensor(rng.standard_normal((4, 8))))
        w = mha.last_weights
        assert (w >= 0).all()
        np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-12)

    def test_output_shape_matches_input(self):
        mha = MultiHeadAttention(12, 4, rng)
        out2d = mha(Tensor(rng.standard_normal((5, 12))))
        assert out2d.shape == (5, 12)
        out3d = mha(Tensor(rng.standard_normal((2, 5, 12))))
        assert out3d.shape == (2, 5, 12)

    def test_dim_not_divisible_rejected(self):
        with pytest.raises(ValueError):
            MultiHeadAttention(10, 3, rng)

    def test_gradients(self):
        mha = MultiHeadAttention(8, 2, rng)
        tok = Tensor(rng.standard_normal((3, 8)), requires_grad=True)

        def loss():
            out = mha(tok)
            return tsum(mul(out, out))

        assert finite_difference_check(loss, [tok] + mha.parameters()) <= 1e-5
