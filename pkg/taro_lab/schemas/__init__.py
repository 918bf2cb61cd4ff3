"""
Pydantic schemas for configuration, reports and checkpoints
"""
from taro_lab.schemas.configs import (
    AttackConfig,
    AttackMode,
    AugmentationConfig,
    LossConfig,
    ModelConfig,
    OptimizerConfig,
    ProbeConfig,
    RunConfig,
    ScoreConfig,
    SslMode,
    SyntheticDatasetSpec,
)
from taro_lab.schemas.reports import (
    CHECKPOINT_FORMAT_VERSION,
    Checkpoint,
    EnsembleSummary,
    EpochRecord,
    Metrics,
    ObjectiveResult,
    RangeReport,
    TargetClassReport,
    TensorRecord,
    TransferReport,
)

__all__ = [
    "AttackConfig",
    "AttackMode",
    "AugmentationConfig",
    "LossConfig",
    "ModelConfig",
    "OptimizerConfig",
    "ProbeConfig",
    "RunConfig",
    "ScoreConfig",
    "SslMode",
    "SyntheticDatasetSpec",
    "CHECKPOINT_FORMAT_VERSION",
    "Checkpoint",
    "EnsembleSummary",
    "EpochRecord",
    "Metrics",
    "ObjectiveResult",
    "RangeReport",
    "TargetClassReport",
    "TensorRecord",
    "TransferReport",
]
