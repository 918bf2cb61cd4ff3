"""
SGD with momentum and L2 weight decay
"""
import logging
from typing import Dict, List, Optional

import numpy as np

from taro_lab.autodiff import Tensor
from taro_lab.models.siamnet import SiamNet
from taro_lab.schemas.configs import OptimizerConfig
from taro_lab.utils.error_handler import DivergenceError

logger = logging.getLogger(__name__)


class SGD:
    """
    Heavy-ball SGD over a subset of a SiamNet's parameters

    v <- momentum * v + (g + weight_decay * theta); theta <- theta - lr * v
    """

    def __init__(self, config: OptimizerConfig, names: Optional[List[str]] = None):
        """
        Initialize optimizer

        Args:
            config: Learning rate, momentum and weight decay
            names: Parameter names to update (all when None)
        """
        self.config = config
        self.names = names
        self.velocity: Dict[str, np.ndarray] = {}

    def step(self, net: SiamNet, grads: Dict[str, Tensor]) -> SiamNet:
        """
        Apply one update and return the new net

        Args:
            net: Current parameters
            grads: Gradient per parameter name

        Returns:
            Updated SiamNet

        Raises:
            DivergenceError: A gradient or updated parameter is non-finite
        """
        updates = {}
        for name in self.names or net.names():
            grad = grads[name].data + self.config.weight_decay * net.params[name].data
            previous = self.velocity.get(name)
            velocity = grad if previous is None else self.config.momentum * previous + grad
            self.velocity[name] = velocity
            updated = net.params[name].data - self.config.lr * velocity
            if not np.all(np.isfinite(updated)):
                raise DivergenceError(f"parameter {name} diverged")
            updates[name] = Tensor(updated)
        return net.with_params(updates)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: v.copy() for name, v in self.velocity.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        self.velocity = {name: np.array(v, dtype=np.float64) for name, v in state.items()}
