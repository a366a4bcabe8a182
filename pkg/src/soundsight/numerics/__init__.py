from .linalg import psd_sqrt
from .optim import OptimizerState, adamw_step, lr_at
from .tensor import (
    DTYPE,
    NonFiniteError,
    ShapeMismatch,
    Tensor,
    add,
    astensor,
    concat,
    cross_entropy,
    embedding,
    exp,
    gelu,
    l2_normalize,
    layer_norm,
    matmul,
    mean,
    mul,
    narrow,
    no_grad,
    reshape,
    set_check_finite,
    softmax,
    sub,
    sum_,
    take,
    transpose,
)

__all__ = [
    "DTYPE",
    "NonFiniteError",
    "OptimizerState",
    "ShapeMismatch",
    "Tensor",
    "adamw_step",
    "add",
    "astensor",
    "concat",
    "cross_entropy",
    "embedding",
    "exp",
    "gelu",
    "l2_normalize",
    "layer_norm",
    "lr_at",
    "matmul",
    "mean",
    "mul",
    "narrow",
    "no_grad",
    "psd_sqrt",
    "reshape",
    "set_check_finite",
    "softmax",
    "sub",
    "sum_",
    "take",
    "transpose",
]
