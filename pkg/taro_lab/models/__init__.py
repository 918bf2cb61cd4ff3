"""
Network stacks for positive-pair-only and contrastive SSL
"""
from taro_lab.models.optimizer import SGD
from taro_lab.models.siamnet import (
    EmbeddingSet,
    SiamNet,
    classify_logits,
    encode,
    forward_embed,
    head_logits,
    mlp_forward,
    parameter_shapes,
)

__all__ = [
    "SGD",
    "EmbeddingSet",
    "SiamNet",
    "classify_logits",
    "encode",
    "forward_embed",
    "head_logits",
    "mlp_forward",
    "parameter_shapes",
]
