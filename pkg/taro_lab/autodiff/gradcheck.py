"""
Central finite differences, the oracle for reverse-mode gradients
"""
from typing import Callable, List, Sequence

import numpy as np

from taro_lab.autodiff.tensor import Tensor


def finite_diff_grad(
    lossfn: Callable[..., Tensor],
    params: Sequence,
    h: float = 1e-5
) -> List[Tensor]:
    """
    Numerical gradient (L(theta + h) - L(theta - h)) / 2h per coordinate

    Args:
        lossfn: Pure function of the params returning a scalar (tensor or float)
        params: Tensors or arrays at which to differentiate
        h: Step size

    Returns:
        Gradient tensors, index-aligned with params
    """
    base = [np.array(p.data if isinstance(p, Tensor) else p, dtype=np.float64) for p in params]

    def _evaluate(values) -> float:
        out = lossfn(*[Tensor(v) for v in values])
        return out.item() if isinstance(out, Tensor) else float(out)

    grads = []
    for index, value in enumerate(base):
        grad = np.zeros(value.shape)
        flat = grad.reshape(-1)
        for coord in range(value.size):
            shifted = [v.copy() for v in base]
            shifted[index].reshape(-1)[coord] += h
            upper = _evaluate(shifted)
            shifted[index].reshape(-1)[coord] -= 2 * h
            lower = _evaluate(shifted)
            flat[coord] = (upper - lower) / (2 * h)
        grads.append(Tensor(grad))
    return grads
