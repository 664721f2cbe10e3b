"""Dense-array compute core: reverse-mode autodiff, layers, and Adam."""

from gliomol.autodiff.tensor import (
    GradientError,
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
    reshape,
    reverse_grad,
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
from gliomol.autodiff.optim import AdamState, adam_step, cosine_lr
from gliomol.autodiff.layers import (
    Conv2d,
    FeedForward,
    LayerNorm,
    Linear,
    MultiHeadAttention,
    TransformerBlock,
)

__all__ = [
    "GradientError",
    "Tensor",
    "add",
    "backward",
    "clip",
    "concat",
    "conv2d",
    "l2_normalize",
    "matmul",
    "mul",
    "power",
    "relu",
    "reshape",
    "reverse_grad",
    "sigmoid",
    "softmax",
    "take",
    "take_rows",
    "texp",
    "tlog",
    "tmean",
    "transpose",
    "tsum",
    "AdamState",
    "adam_step",
    "cosine_lr",
    "Conv2d",
    "FeedForward",
    "LayerNorm",
    "Linear",
    "MultiHeadAttention",
    "TransformerBlock",
]
