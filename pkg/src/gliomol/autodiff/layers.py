"""Neural layers assembled from the autodiff primitives.

All layers hold their parameters as Tensors with ``requires_grad=True`` and
expose them through ``parameters()`` for the optimizer. Initialization draws
from an explicit ``numpy.random.Generator`` so runs are seed-deterministic.
"""

from __future__ import annotations

import numpy as np

from gliomol.autodiff import tensor as T
from gliomol.autodiff.tensor import Tensor


class Linear:
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        scale = np.sqrt(2.0 / d_in)
        self.w = Tensor(rng.normal(0.0, scale, size=(d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = T.matmul(x, self.w)
        return T.add(out, self.b) if self.b is not None else out

    def parameters(self) -> list:
        return [self.w] + ([self.b] if self.b is not None else [])


class Conv2d:
    """3x3 stride-2 NHWC convolution by default; pad keeps ceil(H/stride)."""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        rng: np.random.Generator,
        kernel: int = 3,
        stride: int = 2,
        pad: int = 1,
    ):
        fan_in = kernel * kernel * c_in
        scale = np.sqrt(2.0 / fan_in)
        self.w = Tensor(rng.normal(0.0, scale, size=(kernel, kernel, c_in, c_out)), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.pad = pad

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)

    def parameters(self) -> list:
        return [self.w, self.b]


class LayerNorm:
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = T.tmean(x, axis=-1, keepdims=True)
        centered = T.add(x, T.mul(mu, -1.0))
        var = T.tmean(T.mul(centered, centered), axis=-1, keepdims=True)
        inv = T.power(T.add(var, self.eps), -0.5)
        return T.add(T.mul(T.mul(centered, inv), self.gamma), self.beta)

    def parameters(self) -> list:
        return [self.gamma, self.beta]


class MultiHeadAttention:
    """Scaled dot-product attention over a token sequence.

    Accepts (T, d) or batched (B, T, d) input and returns the same shape.
    The post-softmax weights of the most recent call are kept (as a plain
    array) in ``last_weights`` for inspection.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads != 0:
            raise ValueError(f"model dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.wo = Linear(dim, dim, rng)
        self.last_weights: np.ndarray | None = None

    def __call__(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = T.reshape(x, (1,) + x.shape)
        b, t, d = x.shape
        h = self.heads
        dh = d // h

        def split(z):  # (B, T, d) -> (B, h, T, dh)
            return T.transpose(T.reshape(z, (b, t, h, dh)), (0, 2, 1, 3))

        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        attn = T.softmax(scores, axis=-1)
        self.last_weights = attn.data.copy()
        ctx = T.matmul(attn, v)  # (B, h, T, dh)
        merged = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, t, d))
        out = self.wo(merged)
        return T.reshape(out, (t, d)) if squeeze else out

    def parameters(self) -> list:
        return self.wq.parameters() + self.wk.parameters() + self.wv.parameters() + self.wo.parameters()


class FeedForward:
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(x)))

    def parameters(self) -> list:
        return self.fc1.parameters() + self.fc2.parameters()


class TransformerBlock:
    """Pre-norm attention block: x + MHA(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, ffn_mult: int = 2):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.ffn = FeedForward(dim, dim * ffn_mult, rng)

    def __call__(self, x: Tensor) -> Tensor:
        x = T.add(x, self.attn(self.ln1(x)))
        return T.add(x, self.ffn(self.ln2(x)))

    def parameters(self) -> list:
        return self.ln1.parameters() + self.attn.parameters() + self.ln2.parameters() + self.ffn.parameters()
