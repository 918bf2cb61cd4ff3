"""
Tensor values and the define-by-run tape that records them
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from taro_lab.utils.error_handler import ContractError, NonFiniteError

logger = logging.getLogger(__name__)

# Guards every normalization in the package
EPS_NORM = 1e-12

BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """
    Dense float64 array, optionally bound to a node of a Tape

    The payload is a C-contiguous (row-major) read-only numpy array.
    Construction rejects NaN and Inf.
    """

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape: Optional["Tape"] = None, node_id: Optional[int] = None):
        arr = np.array(data, dtype=np.float64, order="C")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"Tensor of shape {arr.shape} contains NaN or Inf")
        arr.setflags(write=False)
        self.data = arr
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def tracked(self) -> bool:
        """True when the tensor is a node on a tape"""
        return self.tape is not None

    def item(self) -> float:
        """Python float of a single-element tensor"""
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Writable copy of the payload"""
        return self.data.copy()

    def detach(self) -> "Tensor":
        """Same value, off the tape"""
        return Tensor(self.data)

    def __add__(self, other):
        from taro_lab.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from taro_lab.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from taro_lab.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from taro_lab.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from taro_lab.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from taro_lab.autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from taro_lab.autodiff import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from taro_lab.autodiff import ops
        return ops.div(other, self)

    def __neg__(self):
        from taro_lab.autodiff import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from taro_lab.autodiff import ops
        return ops.matmul(self, other)

    def __repr__(self):
        where = f", node={self.node_id}" if self.tracked else ""
        return f"<Tensor(shape={self.shape}{where})>"


@dataclass(frozen=True)
class Node:
    """One recorded primitive: op kind, input node ids and its local backward"""
    op: str
    inputs: Tuple[Optional[int], ...]
    shape: Tuple[int, ...]
    backward: Optional[BackwardFn] = None


class Tape:
    """
    Append-only record of primitive operations

    Node ids are assigned in creation order, so inputs always precede
    outputs and a reverse sweep over ids is a valid topological order.
    A tape is rebuilt for every forward pass.
    """

    def __init__(self):
        self.nodes: List[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def watch(self, value) -> Tensor:
        """
        Register a leaf whose gradient may be requested

        Args:
            value: Tensor or array-like

        Returns:
            Tensor bound to a new leaf node
        """
        data = value.data if isinstance(value, Tensor) else value
        tensor = Tensor(data, tape=self, node_id=len(self.nodes))
        self.nodes.append(Node(op="leaf", inputs=(), shape=tensor.shape))
        return tensor

    def record(
        self,
        op: str,
        inputs: Sequence[Tensor],
        out: np.ndarray,
        backward: Optional[BackwardFn]
    ) -> Tensor:
        """Append a node computed from inputs and return its output tensor"""
        tensor = Tensor(out, tape=self, node_id=len(self.nodes))
        ids = tuple(t.node_id if t.tape is self else None for t in inputs)
        self.nodes.append(Node(op=op, inputs=ids, shape=tensor.shape, backward=backward))
        return tensor


def backward(loss: Tensor, params: Sequence[Tensor]) -> List[Tensor]:
    """
    Exact reverse-mode gradients of a scalar loss

    Args:
        loss: Scalar tensor on a tape
        params: Watched tensors on the same tape

    Returns:
        Gradient tensors, index-aligned with params (zeros when unreachable)

    Raises:
        ContractError: Non-scalar loss or params from another tape
    """
    if loss.data.shape != ():
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.tracked:
        # A constant has zero gradient everywhere
        return [Tensor(np.zeros(param.shape)) for param in params]

    tape = loss.tape
    for param in params:
        if param.tape is not tape:
            raise ContractError("every param must be watched on the loss tape")

    grads: List[Optional[np.ndarray]] = [None] * (loss.node_id + 1)
    grads[loss.node_id] = np.ones(())

    # Strict reverse id order keeps accumulation order fixed
    for node_id in range(loss.node_id, -1, -1):
        grad = grads[node_id]
        node = tape.nodes[node_id]
        if grad is None or node.backward is None:
            continue
        for input_id, input_grad in zip(node.inputs, node.backward(grad)):
            if input_id is None or input_grad is None:
                continue
            previous = grads[input_id]
            grads[input_id] = input_grad if previous is None else previous + input_grad

    result = []
    for param in params:
        grad = grads[param.node_id] if param.node_id < len(grads) else None
        result.append(Tensor(np.zeros(param.shape) if grad is None else grad))
    return result


def value_and_grad(fn: Callable[..., Tensor], *args) -> Tuple[Tensor, List[Tensor]]:
    """
    Evaluate fn on fresh leaves and return (value, gradients)

    Args:
        fn: Function of tensors returning a scalar tensor
        *args: Tensors or arrays; each becomes a watched leaf

    Returns:
        Loss value and gradient per argument
    """
    tape = Tape()
    leaves = [tape.watch(arg) for arg in args]
    loss = fn(*leaves)
    return loss, backward(loss, leaves)
