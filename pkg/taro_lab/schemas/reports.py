"""
Pydantic schemas for metrics, analysis reports and checkpoints
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from taro_lab.schemas.configs import RunConfig

CHECKPOINT_FORMAT_VERSION = 1


class EpochRecord(BaseModel):
    """One line of metrics.jsonl"""
    epoch: int = Field(..., ge=1)
    loss: float = Field(..., description="Mean training loss over the epoch's batches")
    batches: int = Field(..., ge=0)
    max_displacement: float = Field(
        ..., ge=0, description="Largest |x_adv - x| seen during the epoch's ball check"
    )


class Metrics(BaseModel):
    """Accuracies in percent plus the training trace"""
    clean_acc: Optional[float] = Field(None, ge=0, le=100)
    robust_acc: Optional[float] = Field(None, ge=0, le=100)
    epoch_losses: List[float] = Field(default_factory=list)
    wall_time: float = Field(0.0, ge=0, description="Seconds; never written to metric files")

    def to_file_dict(self) -> Dict[str, Any]:
        """Serializable view without wall time, so files stay bitwise reproducible"""
        return self.model_dump(exclude={"wall_time"})


class TransferReport(BaseModel):
    """Linear and robust-linear evaluation on a new dataset"""
    linear: Metrics
    robust_linear: Metrics


class ObjectiveResult(BaseModel):
    """Brute-force optimum of one perturbation objective"""
    value: float = Field(..., description="Achieved objective value")
    range_value: float = Field(..., description="Squared-form range quantity at the optimum")
    displacement: float = Field(..., ge=0, description="|f(x) - f(x + delta*)|")
    delta: List[float]
    delta_linf: float = Field(..., ge=0)


class RangeReport(BaseModel):
    """Optima of the compared objectives for one linear problem"""
    index: int = Field(..., ge=0)
    objectives: Dict[str, ObjectiveResult]
    pointwise_inequality: Optional[bool] = Field(
        None, description="|f(x)-f(x+d)| < |f(x')-f(x+d)| at the ss optimum (targeted comparison only)"
    )


class EnsembleSummary(BaseModel):
    """Aggregate of a perturbation-range experiment over random linear problems"""
    theorem: int = Field(..., ge=1, le=2)
    compared: List[str] = Field(..., description="[larger-claimed objective, ss]")
    ensemble_size: int = Field(..., ge=1)
    dim: int = Field(..., ge=1)
    epsilon: float = Field(..., gt=0)
    seed: int
    grid_n: int
    fraction_range_ordered: float = Field(
        ..., ge=0, le=1, description="Share of instances where the claimed-larger range >= ss range"
    )
    fraction_objective_ordered: float = Field(
        ..., ge=0, le=1, description="Same comparison on the literal objective values"
    )
    fraction_linf_strict: float = Field(
        ..., ge=0, le=1, description="Share with strictly larger ||delta*||_inf"
    )
    linf_ordering_degenerate: bool = Field(
        ..., description="True when all optima saturate the ball, making the norm ordering vacuous"
    )
    mean_value: Dict[str, float]
    mean_range_value: Dict[str, float]
    mean_displacement: Dict[str, float]
    mean_linf: Dict[str, float]
    direction_diversity: Dict[str, float] = Field(
        ..., description="1 - length of the mean unit optimum direction"
    )
    pointwise_inequality_rate: Optional[float] = Field(None, ge=0, le=1)
    regenerated: int = Field(0, ge=0, description="Instances redrawn for violating the premise")
    instances: List[RangeReport] = Field(default_factory=list)


class TargetClassReport(BaseModel):
    """Which classes the score function picks as targets, per base class"""
    n_classes: int = Field(..., ge=2)
    counts: List[List[int]] = Field(..., description="[base class][target class] selection counts")
    mean_probability: List[List[float]] = Field(
        ..., description="[base class][class] mean probe probability of the selected targets"
    )
    base_confusion: List[List[float]] = Field(
        ..., description="[base class][class] mean probe probability of the base samples"
    )
    top_confused: List[List[int]] = Field(..., description="Two most-confused other classes per base class")
    confused_fraction: List[float] = Field(
        ..., description="Share of targets falling in the top confused classes"
    )

    @model_validator(mode="after")
    def validate_square(self):
        if len(self.counts) != self.n_classes or any(len(row) != self.n_classes for row in self.counts):
            raise ValueError("counts must be n_classes x n_classes")
        return self


class TensorRecord(BaseModel):
    """Named parameter payload with explicit shape"""
    shape: List[int]
    data: List[float]

    @model_validator(mode="after")
    def validate_size(self):
        size = 1
        for dim in self.shape:
            size *= dim
        if size != len(self.data):
            raise ValueError(f"shape {self.shape} does not match {len(self.data)} values")
        return self


class Checkpoint(BaseModel):
    """Everything needed to restore or resume a run"""
    format_version: int = CHECKPOINT_FORMAT_VERSION
    config: RunConfig
    epoch: int = Field(..., ge=0)
    params: Dict[str, TensorRecord]
    optimizer_state: Dict[str, TensorRecord] = Field(default_factory=dict)
    seed_state: Dict[str, Any] = Field(default_factory=dict)
    epoch_records: List[EpochRecord] = Field(default_factory=list)
