"""Tensor autodiff core: primitives, layers, optimizer, gradient checking."""

from .gradcheck import finite_diff_check
from .layers import Affine, BatchNorm, Mlp
from .optim import Parameter, Sgd, cosine_lr
from .tensor import (
    Tensor,
    add,
    backward,
    bmm,
    concat_rows,
    constant,
    cross_entropy,
    div,
    gather_cols,
    gather_rows,
    l2_normalize_rows,
    matmul,
    mean_axis,
    mul,
    no_grad,
    power,
    relu,
    reshape,
    softmax_rows,
    sub,
    sum_axis,
    tanh,
    transpose,
    tsum,
)

__all__ = [
    "Affine",
    "BatchNorm",
    "Mlp",
    "Parameter",
    "Sgd",
    "Tensor",
    "add",
    "backward",
    "bmm",
    "concat_rows",
    "constant",
    "cosine_lr",
    "cross_entropy",
    "div",
    "finite_diff_check",
    "gather_cols",
    "gather_rows",
    "l2_normalize_rows",
    "matmul",
    "mean_axis",
    "mul",
    "no_grad",
    "power",
    "relu",
    "reshape",
    "softmax_rows",
    "sub",
    "sum_axis",
    "tanh",
    "transpose",
    "tsum",
]
