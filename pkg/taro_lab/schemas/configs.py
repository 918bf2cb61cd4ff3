"""
Pydantic schemas for experiment configuration
"""
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

AttackMode = Literal["untargeted", "random_target", "taro_target"]
SslMode = Literal["positive_pair", "contrastive"]
ScoreComponents = Literal["taro", "entropy", "similarity"]
Exclusion = Literal["cross_view", "same_batch"]
ClusterLayout = Literal["equidistant", "ring"]


class LossConfig(BaseModel):
    """Temperature and adversarial similarity weight"""
    tau: float = Field(0.5, gt=0, description="nt-xent temperature")
    w: float = Field(2.0, ge=0, description="Weight of the adversarial similarity term")

    class Config:
        extra = "forbid"
        json_schema_extra = {"example": {"tau": 0.5, "w": 2.0}}


class AttackConfig(BaseModel):
    """l-infinity PGD settings"""
    epsilon: float = Field(..., ge=0, description="Ball radius in input units")
    alpha: float = Field(..., ge=0, description="Signed-gradient step size")
    steps: int = Field(..., ge=1, description="Number of PGD iterations K")
    random_start: bool = Field(True, description="Start from a uniform point in the ball")
    clamp_range: Optional[Tuple[float, float]] = Field(
        None, description="Valid input interval; only set for image-like data"
    )

    @field_validator("clamp_range")
    @classmethod
    def validate_clamp_range(cls, v):
        """Lower bound must sit below upper bound"""
        if v is not None and not v[0] < v[1]:
            raise ValueError(f"clamp_range must be increasing, got {v}")
        return v

    @classmethod
    def for_training(cls, epsilon: float) -> "AttackConfig":
        """K=10, alpha=eps/4, random start"""
        return cls(epsilon=epsilon, alpha=epsilon / 4, steps=10, random_start=True)

    @classmethod
    def for_evaluation(cls, epsilon: float) -> "AttackConfig":
        """K=20, alpha=eps/10, random start"""
        return cls(epsilon=epsilon, alpha=epsilon / 10, steps=20, random_start=True)

    class Config:
        extra = "forbid"
        json_schema_extra = {
            "example": {"epsilon": 0.1, "alpha": 0.025, "steps": 10, "random_start": True}
        }


class ScoreConfig(BaseModel):
    """Target-selection score settings"""
    tau_score: float = Field(0.5, gt=0, description="Temperature of the entropy term")
    exclusion: Exclusion = Field(
        "cross_view",
        description="cross_view: candidates are the other view, index i is the positive; "
                    "same_batch: candidates are the same batch, self and positive excluded"
    )
    components: ScoreComponents = Field("taro", description="Score terms in use")

    class Config:
        extra = "forbid"


class AugmentationConfig(BaseModel):
    """Vector-domain stand-ins for crop / flip / colour jitter"""
    noise_scale: float = Field(0.1, ge=0, description="Gaussian noise std as a fraction of feature std")
    dropout: float = Field(0.1, ge=0, lt=1, description="Per-coordinate zeroing probability")
    scale_min: float = Field(0.8, gt=0, description="Lower bound of the random global scale")
    scale_max: float = Field(1.25, gt=0, description="Upper bound of the random global scale")

    @model_validator(mode="after")
    def validate_scale_range(self):
        if self.scale_min > self.scale_max:
            raise ValueError("scale_min must not exceed scale_max")
        return self

    @classmethod
    def identity(cls) -> "AugmentationConfig":
        """All strengths zero: views equal the input"""
        return cls(noise_scale=0.0, dropout=0.0, scale_min=1.0, scale_max=1.0)

    class Config:
        extra = "forbid"


class ModelConfig(BaseModel):
    """Layer widths of encoder f, projector g and predictor h"""
    input_dim: int = Field(16, ge=1)
    encoder_dims: List[int] = Field(default_factory=lambda: [64, 32], min_length=1)
    projector_dims: List[int] = Field(default_factory=lambda: [32, 16], min_length=1)
    predictor_dims: List[int] = Field(default_factory=lambda: [8, 16], min_length=1)

    @field_validator("encoder_dims", "projector_dims", "predictor_dims")
    @classmethod
    def validate_widths(cls, v):
        if any(width < 1 for width in v):
            raise ValueError("layer widths must be positive")
        return v

    @model_validator(mode="after")
    def validate_predictor(self):
        """Predictor maps projector space back onto itself"""
        if self.predictor_dims[-1] != self.projector_dims[-1]:
            raise ValueError(
                f"predictor output ({self.predictor_dims[-1]}) must equal "
                f"projector output ({self.projector_dims[-1]})"
            )
        return self

    class Config:
        extra = "forbid"
        json_schema_extra = {
            "example": {
                "input_dim": 16,
                "encoder_dims": [64, 32],
                "projector_dims": [32, 16],
                "predictor_dims": [8, 16]
            }
        }


class OptimizerConfig(BaseModel):
    """Plain SGD with momentum and weight decay"""
    lr: float = Field(0.05, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    weight_decay: float = Field(5e-4, ge=0)

    class Config:
        extra = "forbid"


class ProbeConfig(BaseModel):
    """Linear classifier trained on frozen encoder features"""
    epochs: int = Field(30, ge=0)
    batch_size: int = Field(64, ge=1)
    lr: float = Field(0.1, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    weight_decay: float = Field(0.0, ge=0)

    class Config:
        extra = "forbid"


class SyntheticDatasetSpec(BaseModel):
    """Gaussian clusters standing in for a small image benchmark"""
    n_classes: int = Field(5, ge=2)
    dim: int = Field(16, ge=1)
    samples_per_class: int = Field(100, ge=5)
    separation: float = Field(
        4.0, gt=0, description="Distance between cluster centers (neighbouring centers for the ring layout)"
    )
    layout: ClusterLayout = Field(
        "equidistant", description="equidistant: all pairs equally far; ring: centers on a circle"
    )
    within_std: float = Field(1.0, gt=0, description="Per-coordinate std inside a cluster")
    train_fraction: float = Field(0.8, gt=0, lt=1)
    shift: float = Field(0.0, description="Constant offset added to every coordinate")
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def validate_room_for_centers(self):
        """Equidistant centers need one orthogonal direction per class, a ring needs a plane"""
        if self.layout == "ring":
            if self.dim < 2:
                raise ValueError("the ring layout needs dim >= 2")
        elif self.n_classes > self.dim:
            raise ValueError(f"n_classes ({self.n_classes}) cannot exceed dim ({self.dim})")
        return self

    class Config:
        extra = "forbid"
        json_schema_extra = {
            "example": {
                "n_classes": 5,
                "dim": 16,
                "samples_per_class": 100,
                "separation": 4.0,
                "within_std": 1.0,
                "seed": 0
            }
        }


class RunConfig(BaseModel):
    """Complete description of one adversarial SSL experiment"""
    dataset: SyntheticDatasetSpec = Field(default_factory=SyntheticDatasetSpec)
    data_dir: Optional[str] = Field(None, description="Read CSV splits instead of generating")
    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    epsilon_scale: float = Field(
        0.1, gt=0, description="Default epsilon as a multiple of the mean feature std"
    )
    train_attack: Optional[AttackConfig] = Field(
        None, description="Defaults to K=10, alpha=eps/4 with eps = epsilon_scale x feature std"
    )
    eval_attack: Optional[AttackConfig] = Field(
        None, description="Defaults to K=20, alpha=eps/10 with eps = epsilon_scale x feature std"
    )
    score: ScoreConfig = Field(default_factory=ScoreConfig)
    augmentation: AugmentationConfig = Field(default_factory=AugmentationConfig)
    probe: ProbeConfig = Field(default_factory=ProbeConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    attack_mode: AttackMode = "taro_target"
    ssl_mode: SslMode = "positive_pair"
    epochs: int = Field(50, ge=0)
    batch_size: int = Field(32, ge=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def validate_consistency(self):
        """Cross-field rules between modes, batch size and architecture"""
        if self.attack_mode != "untargeted" and self.batch_size < 2:
            raise ValueError("targeted attack modes need batch_size >= 2")
        if self.ssl_mode == "contrastive" and self.batch_size < 2:
            raise ValueError("contrastive training needs batch_size >= 2 for in-batch negatives")
        if self.data_dir is None and self.model.input_dim != self.dataset.dim:
            raise ValueError(
                f"model.input_dim ({self.model.input_dim}) must equal dataset.dim ({self.dataset.dim})"
            )
        return self

    class Config:
        extra = "forbid"
        json_schema_extra = {
            "example": {
                "attack_mode": "taro_target",
                "ssl_mode": "positive_pair",
                "epochs": 50,
                "batch_size": 32,
                "seed": 0
            }
        }
