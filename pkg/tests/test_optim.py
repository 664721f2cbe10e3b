"""Adam update rule and the cosine learning-rate schedule."""

import numpy as np
import pytest

from gliomol.autodiff import AdamState, Tensor, adam_step, cosine_lr

from oracles import adam_trace_brute


def test_zero_gradient_leaves_params_unchanged():
    p = Tensor(np.array([1.0, -2.0, 3.0]))
    state = AdamState.for_params([p], lr=0.01)
    adam_step(state, [p], [np.zeros(3)])
    np.testing.assert_array_equal(p.data, [1.0, -2.0, 3.0])


def test_first_step_moves_by_lr_times_sign():
    g = np.array([0.3, -1.7, 0.02])
    p = Tensor(np.zeros(3))
    state = AdamState.for_params([p], lr=0.01)
    adam_step(state, [p], [g])
    # bias correction makes the first step -lr * g / (|g| + eps) ~ -lr * sign(g)
    np.testing.assert_allclose(p.data, -0.01 * np.sign(g), rtol=0, atol=0.01 * 1e-6)


def test_two_steps_match_hand_simulated_trace():
    x0 = np.array([0.5, -0.25])
    grads = [np.array([0.1, -0.4]), np.array([-0.2, 0.3])]
    p = Tensor(x0.copy())
    state = AdamState.for_params([p], lr=0.05)
    for g in grads:
        adam_step(state, [p], [g])
    expected = adam_trace_brute(x0, grads, lr=0.05)
    np.testing.assert_allclose(p.data, expected, rtol=1e-14)


def test_shape_mismatch_rejected():
    p = Tensor(np.zeros(3))
    state = AdamState.for_params([p], lr=0.01)
    with pytest.raises(ValueError):
        adam_step(state, [p], [np.zeros(4)])


def test_step_count_increases():
    p = Tensor(np.zeros(2))
    state = AdamState.for_params([p])
    for expected in (1, 2, 3):
        adam_step(state, [p], [np.ones(2)])
        assert state.step == expected


class TestCosineSchedule:
    def test_endpoints_and_midpoint(self):
        assert cosine_lr(0, 100, 1e-3, 1e-5) == pytest.approx(1e-3)
        assert cosine_lr(100, 100, 1e-3, 1e-5) == pytest.approx(1e-5)
        assert cosine_lr(50, 100, 1e-3, 1e-5) == pytest.approx((1e-3 + 1e-5) / 2)

    def test_monotone_decrease(self):
        values = [cosine_lr(s, 50, 0.1, 0.0) for s in range(51)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_step_beyond_total_rejected(self):
        with pytest.raises(ValueError):
            cosine_lr(101, 100, 1e-3, 0.0)
