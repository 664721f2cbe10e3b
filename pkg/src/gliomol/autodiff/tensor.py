"""Reverse-mode autodiff over dense float64 numpy arrays.

Every operation records its parents and a closure that pushes the output
adjoint back onto them; ``backward`` walks the recorded graph once in
reverse topological order, summing adjoints over shared subexpressions.
Forward values are plain float64 ndarrays throughout.
"""

from __future__ import annotations

import numpy as np

from gliomol import _kernels


class GradientError(ValueError):
    """Raised for malformed backward requests (non-scalar loss, off-tape param)."""


def _as_f64(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 ndarray plus the bookkeeping needed for reverse-mode grads."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f64(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    # -- introspection ------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __float__(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -_as_f64(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / _as_f64(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = _lift(a)
    p = float(exponent)
    out_data = a.data**p

    def backward(g):
        _accum(a, g * p * a.data ** (p - 1.0))

    return _make(out_data, (a,), backward)


def texp(a) -> Tensor:
    a = _lift(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accum(a, g * out_data)

    return _make(out_data, (a,), backward)


def tlog(a) -> Tensor:
    a = _lift(a)
    out_data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _make(out_data, (a,), backward)


def relu(a) -> Tensor:
    a = _lift(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        _accum(a, g * (a.data > 0.0))

    return _make(out_data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = _lift(a)
    # stable two-sided form
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = _lift(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        gs = (g * out_data).sum(axis=axis, keepdims=True)
        _accum(a, out_data * (g - gs))

    return _make(out_data, (a,), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp with zero gradient outside [lo, hi]."""
    a = _lift(a)
    out_data = np.clip(a.data, lo, hi)

    def backward(g):
        _accum(a, g * ((a.data >= lo) & (a.data <= hi)))

    return _make(out_data, (a,), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(out_data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    n = a.data.size if axis is None else np.prod([a.data.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return _make(out_data, (a, b), backward)


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(out_data, (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = _lift(a)
    out_data = np.transpose(a.data, axes)

    def backward(g):
        inv = None if axes is None else np.argsort(axes)
        _accum(a, np.transpose(g, inv))

    return _make(out_data, (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make(out_data, tuple(tensors), backward)


def take(a, key) -> Tensor:
    """Basic indexing (slices / ints); gradient scatters back into place."""
    a = _lift(a)
    out_data = a.data[key]

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        _accum(a, full)

    return _make(out_data, (a,), backward)


def take_rows(a, indices) -> Tensor:
    """Row gather along axis 0 with duplicate-aware scatter-add backward."""
    a = _lift(a)
    idx = np.asarray(indices, dtype=np.int64)
    out_data = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _accum(a, full)

    return _make(out_data, (a,), backward)


def conv2d(x, w, b, stride: int = 2, pad: int = 1) -> Tensor:
    """Strided 2-D convolution over NHWC input, kernel (k, k, Cin, Cout)."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    bsz, h, wd, cin = x.data.shape
    k, k2, cin2, cout = w.data.shape
    if k != k2 or cin != cin2:
        raise ValueError(f"kernel {w.data.shape} incompatible with input {x.data.shape}")
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x.data
    cols = _kernels.im2col(xp, k, stride)
    _, ho, wo, kkc = cols.shape
    flat = cols.reshape(-1, kkc)
    out_data = (flat @ w.data.reshape(kkc, cout) + b.data).reshape(bsz, ho, wo, cout)

    def backward(g):
        gflat = g.reshape(-1, cout)
        if w.requires_grad:
            _accum(w, (flat.T @ gflat).reshape(w.data.shape))
        if b.requires_grad:
            _accum(b, gflat.sum(axis=0))
        if x.requires_grad:
            dcols = (gflat @ w.data.reshape(kkc, cout).T).reshape(bsz, ho, wo, kkc)
            dxp = _kernels.col2im_add(dcols, xp.shape, k, stride)
            _accum(x, dxp[:, pad : pad + h, pad : pad + wd, :] if pad else dxp)

    return _make(out_data, (x, w, b), backward)


def l2_normalize(a, axis: int = -1, eps: float = 1e-30) -> Tensor:
    """Rows scaled to unit Euclidean norm (eps only guards exact zeros)."""
    sq = tsum(mul(a, a), axis=axis, keepdims=True)
    inv = power(add(sq, eps), -0.5)
    return mul(a, inv)


# ---------------------------------------------------------------------------
# backward driver
# ---------------------------------------------------------------------------

def _toposort(root: Tensor) -> list:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into .grad for every node reaching loss."""
    if loss.data.size != 1:
        raise GradientError(f"backward needs a scalar, got shape {loss.data.shape}")
    order = _toposort(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


def reverse_grad(loss: Tensor, params: list) -> list:
    """Gradients of a scalar loss for each param; params must be on the tape."""
    if loss.data.size != 1:
        raise GradientError(f"loss must be scalar, got shape {loss.data.shape}")
    for p in params:
        p.zero_grad()
    on_tape = {id(n) for n in _toposort(loss)}
    backward(loss)
    grads = []
    for p in params:
        if id(p) not in on_tape:
            raise GradientError("parameter is not reachable from the loss")
        grads.append(p.grad if p.grad is not None else np.zeros_like(p.data))
    return grads
