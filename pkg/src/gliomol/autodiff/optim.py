"""Adam with bias correction plus the cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gliomol.autodiff.tensor import Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators and the step count."""

    lr: float = 1e-3
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list, lr: float = 1e-3) -> "AdamState":
        state = cls(lr=lr)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(state: AdamState, params: list, grads: list, lr: float | None = None) -> None:
    """One bias-corrected Adam update, applied to params in place."""
    if len(params) != len(state.m):
        raise ValueError(f"optimizer state holds {len(state.m)} params, got {len(params)}")
    if len(grads) != len(params):
        raise ValueError("params and grads length mismatch")
    state.step += 1
    t = state.step
    step_lr = state.lr if lr is None else lr
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        data = p.data if isinstance(p, Tensor) else p
        if g.shape != data.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {data.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        mhat = state.m[i] / bc1
        vhat = state.v[i] / bc2
        data -= step_lr * mhat / (np.sqrt(vhat) + state.eps)


def cosine_lr(step: int, total: int, lr_max: float, lr_min: float = 0.0) -> float:
    """Half-cosine decay from lr_max at step 0 to lr_min at step == total."""
    if step < 0 or step > total:
        raise ValueError(f"step {step} outside [0, {total}]")
    if lr_min > lr_max:
        raise ValueError("lr_min exceeds lr_max")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total))
