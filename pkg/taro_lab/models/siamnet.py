"""
Encoder / projector / predictor stacks and the linear probe head
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from taro_lab.autodiff import Tape, Tensor, linear_forward, relu, stop_gradient
from taro_lab.schemas.configs import ModelConfig, SslMode
from taro_lab.utils.error_handler import ContractError, ShapeMismatchError

logger = logging.getLogger(__name__)

STACKS = ("encoder", "projector", "predictor")


@dataclass(frozen=True)
class EmbeddingSet:
    """
    Per-sample embeddings of one input batch

    e = f(x), z = g(f(x)), p = h(g(f(x))); p is z itself when the net has
    no predictor (contrastive mode).
    """
    e: Tensor
    z: Tensor
    p: Tensor

    def __len__(self) -> int:
        return self.e.shape[0] if self.e.ndim == 2 else 1

    def detached(self) -> "EmbeddingSet":
        return EmbeddingSet(self.e.detach(), self.z.detach(), self.p.detach())


class SiamNet:
    """
    Parameter bundle for f, g, h and an optional classification head

    Parameters are stored by name ("encoder.0.W", "head.b", ...) in a
    fixed insertion order. The object is treated as immutable: training
    produces new instances through with_params().
    """

    def __init__(self, params: Dict[str, Tensor]):
        self.params = dict(params)
        self.layer_counts = {
            stack: sum(1 for name in self.params if name.startswith(f"{stack}.") and name.endswith(".W"))
            for stack in STACKS
        }
        self.validate()

    @classmethod
    def initialize(
        cls,
        config: ModelConfig,
        ssl_mode: SslMode,
        rng: np.random.Generator
    ) -> "SiamNet":
        """
        Build a freshly initialized net

        Weights and biases are uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].

        Args:
            config: Layer widths
            ssl_mode: positive_pair builds a predictor, contrastive does not
            rng: Seeded generator

        Returns:
            New SiamNet without head
        """
        params: Dict[str, Tensor] = {}
        shapes = parameter_shapes(config, ssl_mode)
        for name, shape in shapes.items():
            if name.endswith(".W"):
                W, b = _uniform_layer(shape[1], shape[0], rng)
                params[name] = W
                params[name[:-2] + ".b"] = b

        net = cls(params)
        logger.debug(f"Initialized {ssl_mode} net with {net.num_parameters()} parameters")
        return net

    @property
    def has_predictor(self) -> bool:
        return self.layer_counts["predictor"] > 0

    @property
    def has_head(self) -> bool:
        return "head.W" in self.params

    @property
    def input_dim(self) -> int:
        return self.params["encoder.0.W"].shape[1]

    @property
    def encoder_dim(self) -> int:
        return self.params[f"encoder.{self.layer_counts['encoder'] - 1}.W"].shape[0]

    @property
    def projector_dim(self) -> int:
        return self.params[f"projector.{self.layer_counts['projector'] - 1}.W"].shape[0]

    def names(self) -> List[str]:
        return list(self.params)

    def tensors(self) -> List[Tensor]:
        return list(self.params.values())

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.params.items())

    def num_parameters(self) -> int:
        return sum(t.size for t in self.params.values())

    def validate(self):
        """
        Check that every stack chains and the predictor closes on projector space

        Raises:
            ShapeMismatchError: Layer shapes do not chain
        """
        if self.layer_counts["encoder"] == 0 or self.layer_counts["projector"] == 0:
            raise ShapeMismatchError("net needs at least one encoder and one projector layer")

        previous = None
        for stack in STACKS:
            for layer in range(self.layer_counts[stack]):
                W = self.params.get(f"{stack}.{layer}.W")
                b = self.params.get(f"{stack}.{layer}.b")
                if W is None or b is None or W.ndim != 2 or b.shape != (W.shape[0],):
                    raise ShapeMismatchError(f"malformed layer {stack}.{layer}")
                if previous is not None and W.shape[1] != previous:
                    raise ShapeMismatchError(
                        f"{stack}.{layer} expects width {W.shape[1]}, previous layer gives {previous}"
                    )
                previous = W.shape[0]
            if stack == "projector":
                projector_out = previous

        if self.has_predictor and previous != projector_out:
            raise ShapeMismatchError(
                f"predictor output ({previous}) must equal projector output ({projector_out})"
            )

        if self.has_head:
            W, b = self.params["head.W"], self.params.get("head.b")
            if b is None or W.shape[1] != self.encoder_dim or b.shape != (W.shape[0],):
                raise ShapeMismatchError(f"head shape {W.shape} does not fit encoder width {self.encoder_dim}")

    def with_params(self, updates: Dict[str, Tensor]) -> "SiamNet":
        """Copy with some parameters replaced"""
        unknown = set(updates) - set(self.params)
        if unknown:
            raise ContractError(f"unknown parameters: {sorted(unknown)}")
        merged = dict(self.params)
        merged.update(updates)
        return SiamNet(merged)

    def with_head(self, W, b) -> "SiamNet":
        """Copy with a linear head attached (replacing any existing head)"""
        params = {name: t for name, t in self.params.items() if not name.startswith("head.")}
        params["head.W"] = W if isinstance(W, Tensor) else Tensor(W)
        params["head.b"] = b if isinstance(b, Tensor) else Tensor(b)
        return SiamNet(params)

    def without_head(self) -> "SiamNet":
        return SiamNet({name: t for name, t in self.params.items() if not name.startswith("head.")})

    def track(self, tape: Tape, names: Optional[List[str]] = None) -> "SiamNet":
        """
        Copy whose parameters are watched leaves on a tape

        Args:
            tape: Tape for this forward pass
            names: Parameters to watch (all when None); the rest stay constant

        Returns:
            Tracked SiamNet
        """
        chosen = self.names() if names is None else names
        return SiamNet({
            name: tape.watch(t) if name in chosen else t.detach()
            for name, t in self.params.items()
        })

    def __repr__(self):
        stacks = ", ".join(f"{stack}={count}" for stack, count in self.layer_counts.items())
        return f"<SiamNet({stacks}, head={self.has_head}, params={self.num_parameters()})>"


def parameter_shapes(config: ModelConfig, ssl_mode: SslMode) -> Dict[str, Tuple[int, ...]]:
    """Expected name -> shape map for a net built from config (no head)"""
    widths = {
        "encoder": [config.input_dim] + list(config.encoder_dims),
        "projector": [config.encoder_dims[-1]] + list(config.projector_dims),
    }
    if ssl_mode == "positive_pair":
        widths["predictor"] = [config.projector_dims[-1]] + list(config.predictor_dims)

    shapes: Dict[str, Tuple[int, ...]] = {}
    for stack, dims in widths.items():
        for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            shapes[f"{stack}.{layer}.W"] = (fan_out, fan_in)
            shapes[f"{stack}.{layer}.b"] = (fan_out,)
    return shapes


def _uniform_layer(fan_in: int, fan_out: int, rng: np.random.Generator) -> Tuple[Tensor, Tensor]:
    bound = 1.0 / np.sqrt(fan_in)
    W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    b = rng.uniform(-bound, bound, size=(fan_out,))
    return Tensor(W), Tensor(b)


def mlp_forward(net: SiamNet, stack: str, x) -> Tensor:
    """Run one stack; ReLU between layers, none after the last"""
    count = net.layer_counts[stack]
    out = x
    for layer in range(count):
        out = linear_forward(net.params[f"{stack}.{layer}.W"], net.params[f"{stack}.{layer}.b"], out)
        if layer < count - 1:
            out = relu(out)
    return out


def encode(net: SiamNet, x) -> Tensor:
    """Encoder features e = f(x)"""
    return mlp_forward(net, "encoder", x)


def forward_embed(net: SiamNet, x) -> EmbeddingSet:
    """
    Compute (e, z, p) for an input vector or batch

    Gradients flow to the net's tracked parameters and to x when either
    lives on a tape.

    Args:
        net: SiamNet (tracked or constant)
        x: Input [d] or [B x d]

    Returns:
        EmbeddingSet

    Raises:
        DimensionError: Input width does not match the encoder
    """
    e = encode(net, x)
    z = mlp_forward(net, "projector", e)
    p = mlp_forward(net, "predictor", z) if net.has_predictor else z
    return EmbeddingSet(e=e, z=z, p=p)


def head_logits(net: SiamNet, e) -> Tensor:
    """
    Linear probe logits We + b

    The encoder features enter through stop_gradient, so a probe update
    never moves encoder parameters.

    Raises:
        ContractError: Net has no head
    """
    if not net.has_head:
        raise ContractError("net has no classification head")
    return linear_forward(net.params["head.W"], net.params["head.b"], stop_gradient(e))


def classify_logits(net: SiamNet, x) -> Tensor:
    """Logits of the full f -> head path, differentiable w.r.t. x"""
    if not net.has_head:
        raise ContractError("net has no classification head")
    return linear_forward(net.params["head.W"], net.params["head.b"], encode(net, x))
