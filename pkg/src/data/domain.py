"""
Synthetic source/target domains.

The source domain is a mixture of isotropic Gaussians in input space. The
target domain draws fresh class means (a disjoint label space) from a tighter
spread, so 1-shot target episodes stay well below saturation while the source
remains separable for pretraining. Target samples go through an affine map
A x + b with A = I + severity * R, plus extra noise that grows with severity.
R has entries uniform(-1, 1) / sqrt(dim), so the size of the shift does not
grow with the input width. Severity 0 is a pure task shift; 0.2 is the
"near" regime and 0.8 the "distant" regime of the shipped configs.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.numerics.matrix import Matrix
from src.utils.errors import ContractError
from src.utils.seeding import make_rng


class DomainConfig(BaseModel):
    """Parameters of the synthetic domain pair."""

    model_config = ConfigDict(extra="forbid")

    input_dim: int = Field(default=16, ge=1, description="Raw input width")
    source_classes: int = Field(default=20, ge=1, description="Source label-space size")
    target_classes: int = Field(default=10, ge=1, description="Target label-space size")
    source_samples_per_class: int = Field(default=100, ge=1)
    target_samples_per_class: int = Field(default=60, ge=1)
    class_mean_scale: float = Field(
        default=0.5, gt=0.0, description="Std of the source class-mean draws per coordinate"
    )
    target_mean_scale: float = Field(
        default=0.28, gt=0.0, description="Std of the target class-mean draws per coordinate"
    )
    class_cov_scale: float = Field(
        default=0.3, ge=0.0, description="Std of the isotropic within-class noise"
    )
    shift_severity: float = Field(
        default=0.2, ge=0.0, le=1.0, description="Domain-shift severity in [0, 1]"
    )

    @model_validator(mode="after")
    def _enough_classes(self) -> "DomainConfig":
        if self.source_classes < 2:
            raise ValueError("source_classes must be at least 2 for pretraining")
        return self


@dataclass(frozen=True)
class LabeledDataset:
    """Rows of inputs with integer class ids (domain-global) and row ids."""

    x: Matrix
    y: np.ndarray
    ids: np.ndarray

    def __len__(self) -> int:
        return int(self.x.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.x.shape[1])


@dataclass(frozen=True)
class DomainSpec:
    """
    One synthetic domain and its sample pool.

    ``class_ids`` are the domain-global labels used in ``data.y``; the source
    and target id ranges never overlap.
    """

    input_dim: int
    class_ids: Tuple[int, ...]
    class_means: Matrix
    class_cov_scale: float
    transform_a: Matrix
    transform_b: np.ndarray
    shift_severity: float
    seed: int
    data: LabeledDataset

    @property
    def num_classes(self) -> int:
        return len(self.class_ids)

    def mapped_means(self) -> Matrix:
        """Class means after the domain transform (input-space centroids)."""
        return self.class_means @ self.transform_a.T + self.transform_b


@dataclass(frozen=True)
class DomainPair:
    source: DomainSpec
    target: DomainSpec


def _sample_mixture(
    rng: np.random.Generator,
    means: Matrix,
    class_ids: Tuple[int, ...],
    per_class: int,
    cov_scale: float,
) -> Tuple[Matrix, np.ndarray]:
    y_local = np.repeat(np.arange(len(class_ids)), per_class)
    x = means[y_local] + cov_scale * rng.standard_normal((y_local.size, means.shape[1]))
    return x, np.asarray(class_ids, dtype=np.int64)[y_local]


def make_domain_pair(config: DomainConfig, seed: int) -> DomainPair:
    """
    Generate the source domain (with training data) and the shifted target.

    Deterministic given (config, seed).
    """
    dim = config.input_dim

    # Source: identity transform
    src_rng = make_rng(seed, "source")
    src_ids = tuple(range(config.source_classes))
    src_means = src_rng.normal(0.0, config.class_mean_scale, (config.source_classes, dim))
    src_x, src_y = _sample_mixture(
        src_rng, src_means, src_ids, config.source_samples_per_class, config.class_cov_scale
    )
    source = DomainSpec(
        input_dim=dim,
        class_ids=src_ids,
        class_means=src_means,
        class_cov_scale=config.class_cov_scale,
        transform_a=np.eye(dim),
        transform_b=np.zeros(dim),
        shift_severity=0.0,
        seed=seed,
        data=LabeledDataset(x=src_x, y=src_y, ids=np.arange(src_y.size)),
    )

    # Target: fresh means, disjoint ids, affine shift plus severity noise
    tgt_rng = make_rng(seed, "target")
    severity = config.shift_severity
    tgt_ids = tuple(range(config.source_classes, config.source_classes + config.target_classes))
    tgt_means = tgt_rng.normal(0.0, config.target_mean_scale, (config.target_classes, dim))
    rotation = tgt_rng.uniform(-1.0, 1.0, (dim, dim)) / math.sqrt(dim)
    transform_a = np.eye(dim) + severity * rotation
    transform_b = severity * tgt_rng.standard_normal(dim)

    raw_x, tgt_y = _sample_mixture(
        tgt_rng, tgt_means, tgt_ids, config.target_samples_per_class, config.class_cov_scale
    )
    tgt_x = raw_x @ transform_a.T + transform_b
    tgt_x = tgt_x + severity * config.class_cov_scale * tgt_rng.standard_normal(tgt_x.shape)

    target = DomainSpec(
        input_dim=dim,
        class_ids=tgt_ids,
        class_means=tgt_means,
        class_cov_scale=config.class_cov_scale,
        transform_a=transform_a,
        transform_b=transform_b,
        shift_severity=severity,
        seed=seed,
        data=LabeledDataset(x=tgt_x, y=tgt_y, ids=np.arange(tgt_y.size)),
    )

    logger.info(
        f"Domain pair: {len(source.data)} source rows / {config.source_classes} classes, "
        f"{len(target.data)} target rows / {config.target_classes} classes, "
        f"severity={severity}"
    )
    return DomainPair(source=source, target=target)


def validate_source(dataset: LabeledDataset) -> None:
    """Reject datasets that cannot support supervised pretraining."""
    if len(dataset) == 0:
        raise ContractError("Source dataset is empty")
    if np.unique(dataset.y).size < 2:
        raise ContractError("Source dataset needs at least 2 classes")
