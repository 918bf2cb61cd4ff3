"""
Minimal reverse-mode automatic differentiation over dense float64 tensors
"""
from taro_lab.autodiff.tensor import EPS_NORM, Node, Tape, Tensor, backward, value_and_grad
from taro_lab.autodiff.gradcheck import finite_diff_grad
from taro_lab.autodiff.ops import (
    add,
    as_tensor,
    concat,
    cosine_similarity,
    div,
    exp,
    l2_normalize,
    linear_forward,
    log,
    logsumexp,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    stop_gradient,
    sub,
    take,
    transpose,
)
from taro_lab.autodiff.ops import sum as reduce_sum

__all__ = [
    "EPS_NORM",
    "Node",
    "Tape",
    "Tensor",
    "backward",
    "value_and_grad",
    "finite_diff_grad",
    "add",
    "as_tensor",
    "concat",
    "cosine_similarity",
    "div",
    "exp",
    "l2_normalize",
    "linear_forward",
    "log",
    "logsumexp",
    "matmul",
    "mean",
    "mul",
    "neg",
    "relu",
    "reshape",
    "stop_gradient",
    "sub",
    "take",
    "transpose",
    "reduce_sum",
]
