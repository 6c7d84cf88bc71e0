"""
Pydantic schemas for runs, trajectories and reports.

ExperimentConfig is the fully resolved configuration of one run; every
section is a nested model with extra="forbid" so unknown keys are rejected.
"""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.data.domain import DomainConfig
from src.dcl.loss import DclMode, DclOptions
from src.dcl.schedule import LambdaNMode
from src.dcl.weights import LOGISTIC_K_INIT, LOGISTIC_X0_INIT, SchemeVariant
from src.losses.im import LossWeights


class Method(str, Enum):
    """Which losses are active during adaptation."""

    FINE_TUNE = "FineTune"
    SIM = "SIM"
    IM = "IM"
    IM_DCL_UNWEIGHTED = "IM_DCL_Unweighted"
    IM_DCL = "IM_DCL"

    @property
    def uses_im_on_support(self) -> bool:
        return self is not Method.FINE_TUNE

    @property
    def has_transductive_phase(self) -> bool:
        return self in (Method.IM, Method.IM_DCL_UNWEIGHTED, Method.IM_DCL)

    @property
    def uses_dcl(self) -> bool:
        return self in (Method.IM_DCL_UNWEIGHTED, Method.IM_DCL)


ABLATION_METHODS = [
    Method.FINE_TUNE,
    Method.SIM,
    Method.IM,
    Method.IM_DCL_UNWEIGHTED,
    Method.IM_DCL,
]

SIGMA_GRID = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5]

TOP_K_GRID = list(range(1, 11))

DISTANT_SEVERITY = 0.8


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", use_enum_values=False)


class EpisodeConfig(_Section):
    way: int = Field(default=5, ge=2, description="N classes per episode")
    shot: int = Field(default=1, ge=1, description="K labeled rows per class")
    queries: int = Field(default=15, ge=1, description="Q query rows per class")


class ModelConfig(_Section):
    hidden_dims: List[int] = Field(default_factory=lambda: [64, 64])
    feature_dim: int = Field(default=32, ge=1)


class PretrainConfig(_Section):
    pretrain_epochs: int = Field(default=30, ge=1)
    pretrain_batch_size: int = Field(default=128, ge=1)
    pretrain_lr: float = Field(default=0.05, gt=0.0)
    pretrain_momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    pretrain_weight_decay: float = Field(default=5e-4, ge=0.0)


class AdaptConfig(_Section):
    """Adaptation hyperparameters for one episode."""

    epochs: int = Field(default=100, ge=0, description="H adaptation epochs")
    lr: float = Field(default=0.01, ge=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=1e-3, ge=0.0)
    lambda_cer: float = Field(default=1.0, ge=0.0)
    lambda_div: float = Field(default=1.0, ge=0.0)
    lambda_im: float = Field(default=1.0, ge=0.0)
    lambda_dcl: float = Field(default=0.1, ge=0.0)
    scheme: SchemeVariant = Field(default=SchemeVariant.REVERSE_ORDER)
    logistic_k: float = Field(default=LOGISTIC_K_INIT)
    logistic_x0: float = Field(default=LOGISTIC_X0_INIT)
    lambda_n_mode: LambdaNMode = Field(default=LambdaNMode.VARIABLE)
    dcl_mode: DclMode = Field(default=DclMode.FULL)
    top_k: int = Field(default=5, ge=1)
    sigma: float = Field(default=2.0, gt=0.0)
    encoder_frozen: bool = False
    method: Method = Field(default=Method.IM_DCL)
    augment: bool = False
    jitter_sigma: float = Field(default=0.05, ge=0.0)
    seed: int = Field(default=0, ge=0, description="Adaptation seed (jitter streams)")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(
            lambda_cer=self.lambda_cer,
            lambda_div=self.lambda_div,
            lambda_im=self.lambda_im,
            lambda_dcl=self.lambda_dcl,
        )

    @property
    def dcl_options(self) -> DclOptions:
        return DclOptions(
            mode=self.dcl_mode,
            top_k=self.top_k,
            sigma=self.sigma,
            weighted=self.method is not Method.IM_DCL_UNWEIGHTED,
        )


class RunConfig(_Section):
    episodes: int = Field(default=100, ge=1, description="E evaluation episodes")
    seed: int = Field(default=0, ge=0, description="Top-level seed for every stream")
    jobs: int = Field(default=1, ge=1, description="Worker processes")


class ExperimentConfig(_Section):
    """Fully resolved run configuration."""

    domain: DomainConfig = Field(default_factory=DomainConfig)
    episode: EpisodeConfig = Field(default_factory=EpisodeConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    adapt: AdaptConfig = Field(default_factory=AdaptConfig)
    run: RunConfig = Field(default_factory=RunConfig)

    @model_validator(mode="after")
    def _episode_fits_target(self) -> "ExperimentConfig":
        if self.episode.way > self.domain.target_classes:
            raise ValueError(
                f"way={self.episode.way} exceeds target_classes={self.domain.target_classes}"
            )
        needed = self.episode.shot + self.episode.queries
        if needed > self.domain.target_samples_per_class:
            raise ValueError(
                f"shot+queries={needed} exceeds target_samples_per_class="
                f"{self.domain.target_samples_per_class}"
            )
        return self

    def with_adapt(self, **changes: object) -> "ExperimentConfig":
        """Copy with some adaptation fields replaced (validated)."""
        adapt = AdaptConfig.model_validate({**self.adapt.model_dump(), **changes})
        return self.model_copy(update={"adapt": adapt})


# =============================================================================
# Trajectories and reports
# =============================================================================


class EpochRecord(BaseModel):
    """One line of trajectory.jsonl."""

    episode: int = 0
    epoch: int
    loss_s: float = Field(..., description="Phase 1 objective L_s")
    loss_ce: float
    loss_im_support: float
    loss_q: Optional[float] = Field(None, description="Phase 2 objective L_q")
    loss_im_all: Optional[float] = None
    loss_dcl: Optional[float] = None
    lambda_n: Optional[float] = None
    logistic_k: Optional[float] = None
    logistic_x0: Optional[float] = None
    support_accuracy: float = Field(..., ge=0.0, le=1.0)


class EpisodeResult(BaseModel):
    episode: int
    seed: int
    accuracy: float = Field(..., ge=0.0, le=1.0)


class RunReport(BaseModel):
    """Aggregate of E episodes for one method."""

    method: Method
    accuracies: List[float]
    episode_seeds: List[int]
    mean_accuracy: float = Field(..., ge=0.0, le=1.0)
    ci95: float = Field(..., ge=0.0, description="1.96 * std / sqrt(E)")
    episodes: int
    config: Dict[str, Any]
    config_hash: str
    version: str
    source_train_accuracy: Optional[float] = None
    wall_time_s: float = Field(default=0.0, ge=0.0)

    def summary(self) -> str:
        return f"{self.method.value}: {100 * self.mean_accuracy:.2f}±{100 * self.ci95:.2f}"


class ComparisonRow(BaseModel):
    label: str
    mean_accuracy: float
    ci95: float
    delta_vs_first: float


class ComparisonTable(BaseModel):
    """Paired comparison of several configurations over the same episodes."""

    title: str
    rows: List[ComparisonRow]
    pairwise_deltas: Dict[str, float] = Field(
        default_factory=dict, description="'a - b' -> mean accuracy difference"
    )
    reports: List[RunReport] = Field(default_factory=list)
    domain_gap: Optional[float] = Field(
        None, ge=0.0, description="|near - distant| mean accuracy, set by the gap study"
    )
