"""
Differentiable primitives

Every op takes Tensors (or array-likes, treated as constants), computes its
value with numpy and, when any input lives on a tape, records a node with
its local backward rule. Reductions run in numpy's fixed order, so repeated
evaluation of the same graph is bit-identical.
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from taro_lab.autodiff.tensor import EPS_NORM, Tape, Tensor
from taro_lab.utils.error_handler import (
    ContractError,
    DegenerateVectorError,
    DimensionError,
    NonFiniteError,
)

Operand = Union[Tensor, np.ndarray, float, int, Sequence[float]]
Axis = Optional[int]


def as_tensor(value: Operand) -> Tensor:
    """Wrap a constant; tensors pass through untouched"""
    return value if isinstance(value, Tensor) else Tensor(value)


def _tape_of(inputs: Sequence[Tensor]) -> Optional[Tape]:
    tapes = {id(t.tape): t.tape for t in inputs if t.tape is not None}
    if len(tapes) > 1:
        raise ContractError("operands are recorded on different tapes")
    return next(iter(tapes.values()), None)


def _emit(op: str, inputs: Sequence[Tensor], out: np.ndarray, backward) -> Tensor:
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{op} produced a non-finite value")
    tape = _tape_of(inputs)
    if tape is None:
        return Tensor(out)
    return tape.record(op, inputs, out, backward)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# Elementwise arithmetic

def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        "add", (a, b), a.data + b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        "sub", (a, b), a.data - b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    )


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        "mul", (a, b), a.data * b.data,
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))
    )


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.data == 0.0):
        raise NonFiniteError("division by zero")
    out = a.data / b.data
    return _emit(
        "div", (a, b), out,
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )
    )


def neg(x: Operand) -> Tensor:
    x = as_tensor(x)
    return _emit("neg", (x,), -x.data, lambda g: (-g,))


def exp(x: Operand) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _emit("exp", (x,), out, lambda g: (g * out,))


def log(x: Operand) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0.0):
        raise NonFiniteError("log of a non-positive value")
    return _emit("log", (x,), np.log(x.data), lambda g: (g / x.data,))


def relu(x: Operand) -> Tensor:
    """
    Elementwise max(0, x)

    The subgradient at exactly 0 is 0.
    """
    x = as_tensor(x)
    live = (x.data > 0.0).astype(np.float64)
    return _emit("relu", (x,), np.maximum(x.data, 0.0), lambda g: (g * live,))


def stop_gradient(x: Operand) -> Tensor:
    """Identity forward; contributes exactly zero gradient backward"""
    x = as_tensor(x)
    return _emit("stop_gradient", (x,), x.data, lambda g: (None,))


# Shape plumbing

def reshape(x: Operand, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    return _emit("reshape", (x,), x.data.reshape(shape), lambda g: (g.reshape(x.shape),))


def transpose(x: Operand) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {x.shape}")
    return _emit("transpose", (x,), x.data.T, lambda g: (g.T,))


def concat(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractError("concat needs at least one operand")
    try:
        out = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat shape mismatch: {e}")
    bounds = np.cumsum([t.shape[axis] for t in parts])[:-1]
    return _emit("concat", parts, out, lambda g: tuple(np.split(g, bounds, axis=axis)))


def take(x: Operand, indices: Sequence[int], axis: int = 0) -> Tensor:
    """Gather slices along an axis (rows by default)"""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)

    def _backward(g):
        grad = np.zeros(x.shape)
        moved = np.moveaxis(grad, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (grad,)

    return _emit("take", (x,), np.take(x.data, idx, axis=axis), _backward)


# Reductions

def sum(x: Operand, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)

    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit("sum", (x,), np.sum(x.data, axis=axis, keepdims=keepdims), _backward)


def mean(x: Operand, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def logsumexp(x: Operand, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Stable log(sum(exp(x))) along an axis, optionally over masked entries only

    Args:
        x: Input tensor
        axis: Reduction axis
        mask: Boolean array broadcastable to x; False entries are excluded

    Raises:
        ContractError: A reduced slice has no unmasked entry
    """
    x = as_tensor(x)
    keep = np.ones(x.shape, dtype=bool) if mask is None else np.broadcast_to(mask, x.shape)
    if not np.all(np.any(keep, axis=axis)):
        raise ContractError("logsumexp over an empty set")

    shifted_source = np.where(keep, x.data, -np.inf)
    peak = np.max(shifted_source, axis=axis, keepdims=True)
    weights = np.where(keep, np.exp(np.where(keep, x.data - peak, 0.0)), 0.0)
    total = np.sum(weights, axis=axis, keepdims=True)
    out = np.squeeze(peak + np.log(total), axis=axis)
    softmax = weights / total

    def _backward(g):
        return (np.expand_dims(g, axis) * softmax,)

    return _emit("logsumexp", (x,), out, _backward)


# Linear algebra

def matmul(a: Operand, b: Operand) -> Tensor:
    """Matrix/vector product for operands of rank 1 or 2"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError(f"matmul supports rank 1 or 2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    a2 = a.data if a.ndim == 2 else a.data[None, :]
    b2 = b.data if b.ndim == 2 else b.data[:, None]

    def _backward(g):
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        return (
            (g2 @ b2.T).reshape(a.shape),
            (a2.T @ g2).reshape(b.shape),
        )

    return _emit("matmul", (a, b), a.data @ b.data, _backward)


def linear_forward(W: Operand, b: Operand, x: Operand) -> Tensor:
    """
    Affine map Wx + b

    Args:
        W: Weights [m x n]
        b: Bias [m]
        x: Input [n] or batch [B x n]

    Returns:
        Output [m] or [B x m]

    Raises:
        DimensionError: Shapes do not conform
    """
    W, b, x = as_tensor(W), as_tensor(b), as_tensor(x)
    if W.ndim != 2 or b.shape != (W.shape[0],):
        raise DimensionError(f"linear layer needs W [m x n] and b [m], got {W.shape} and {b.shape}")
    if x.ndim not in (1, 2) or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"linear layer expects input width {W.shape[1]}, got shape {x.shape}")

    out = x.data @ W.data.T + b.data

    def _backward(g):
        if x.ndim == 1:
            return np.outer(g, x.data), g, g @ W.data
        return g.T @ x.data, np.sum(g, axis=0), g @ W.data

    return _emit("linear", (W, b, x), out, _backward)


def l2_normalize(v: Operand, axis: int = -1) -> Tensor:
    """
    v / ||v||_2 along an axis

    Raises:
        DegenerateVectorError: Some norm is at or below EPS_NORM
    """
    v = as_tensor(v)
    norm = np.sqrt(np.sum(v.data * v.data, axis=axis, keepdims=True))
    if np.any(norm <= EPS_NORM):
        raise DegenerateVectorError(f"cannot normalize a vector with norm <= {EPS_NORM}")
    out = v.data / norm

    def _backward(g):
        return ((g - out * np.sum(g * out, axis=axis, keepdims=True)) / norm,)

    return _emit("l2_normalize", (v,), out, _backward)


def cosine_similarity(a: Operand, b: Operand, axis: int = -1) -> Tensor:
    """(a . b) / (||a|| ||b||) along an axis; one value per row for batches"""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"cosine similarity of mismatched shapes {a.shape} and {b.shape}")
    return sum(mul(l2_normalize(a, axis), l2_normalize(b, axis)), axis=axis)
