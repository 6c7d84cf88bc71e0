"""
Source model f = C o M.

M is an MLP encoder (affine + ReLU on hidden layers, affine output of width
d); C is a single affine classifier from d features to N logits. Parameters
are DiffNode leaves, so every forward pass builds a fresh graph.
"""

import math
from dataclasses import dataclass, field
from typing import List, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.numerics.autodiff import DiffNode, add, constant, matmul, parameter, relu
from src.numerics.matrix import Matrix
from src.utils.errors import ShapeError
from src.utils.seeding import make_rng


class ModelDims(BaseModel):
    """Layer widths of the source model."""

    input_dim: int = Field(..., ge=1, description="Width of the raw input")
    hidden_dims: List[int] = Field(
        default_factory=lambda: [64, 64], description="Hidden encoder widths"
    )
    feature_dim: int = Field(default=32, ge=1, description="Encoder output width d")
    num_classes: int = Field(..., ge=1, description="Classifier output width N")

    @model_validator(mode="after")
    def _positive_hidden(self) -> "ModelDims":
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden_dims must be positive, got {self.hidden_dims}")
        return self

    @property
    def encoder_widths(self) -> List[int]:
        return [self.input_dim, *self.hidden_dims, self.feature_dim]


@dataclass
class AffineLayer:
    """x @ weight + bias, with weight d_in x d_out and bias 1 x d_out."""

    weight: DiffNode
    bias: DiffNode

    def __call__(self, x: DiffNode) -> DiffNode:
        return add(matmul(x, self.weight), self.bias)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def parameters(self) -> List[DiffNode]:
        return [self.weight, self.bias]

    def copy(self) -> "AffineLayer":
        return AffineLayer(
            weight=parameter(self.weight.value, name=self.weight.name),
            bias=parameter(self.bias.value, name=self.bias.name),
        )


@dataclass
class SourceModel:
    """
    Encoder layers plus a linear classifier.

    When ``encoder_frozen`` is set, encoder leaves stop requiring gradients and
    the optimizer leaves them untouched.
    """

    encoder_layers: List[AffineLayer]
    classifier: AffineLayer
    encoder_frozen: bool = field(default=False)

    def __post_init__(self) -> None:
        if not self.encoder_layers:
            raise ShapeError("Encoder needs at least one layer")
        for prev, nxt in zip(self.encoder_layers, self.encoder_layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"Encoder layers do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )
        if self.classifier.in_dim != self.feature_dim:
            raise ShapeError(
                f"Classifier expects {self.classifier.in_dim} features, "
                f"encoder emits {self.feature_dim}"
            )
        self.freeze_encoder(self.encoder_frozen)

    @property
    def input_dim(self) -> int:
        return self.encoder_layers[0].in_dim

    @property
    def feature_dim(self) -> int:
        return self.encoder_layers[-1].out_dim

    @property
    def num_classes(self) -> int:
        return self.classifier.out_dim

    @property
    def hidden_dims(self) -> List[int]:
        return [layer.out_dim for layer in self.encoder_layers[:-1]]

    def encoder_parameters(self) -> List[DiffNode]:
        return [p for layer in self.encoder_layers for p in layer.parameters()]

    def classifier_parameters(self) -> List[DiffNode]:
        return self.classifier.parameters()

    def parameters(self) -> List[DiffNode]:
        return self.encoder_parameters() + self.classifier_parameters()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def freeze_encoder(self, frozen: bool = True) -> None:
        self.encoder_frozen = frozen
        for p in self.encoder_parameters():
            p.requires_grad = not frozen

    def copy(self) -> "SourceModel":
        """Deep copy; the copy shares no arrays with the original."""
        return SourceModel(
            encoder_layers=[layer.copy() for layer in self.encoder_layers],
            classifier=self.classifier.copy(),
            encoder_frozen=self.encoder_frozen,
        )

    def with_fresh_classifier(self, num_classes: int, seed: int) -> "SourceModel":
        """Copy of the encoder with a newly initialized N-way classifier."""
        return SourceModel(
            encoder_layers=[layer.copy() for layer in self.encoder_layers],
            classifier=init_classifier(seed, self.feature_dim, num_classes),
            encoder_frozen=self.encoder_frozen,
        )


# =============================================================================
# Initialization
# =============================================================================


def _uniform_layer(
    rng: np.random.Generator, fan_in: int, fan_out: int, name: str
) -> AffineLayer:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return AffineLayer(
        weight=parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)), name=f"{name}.weight"),
        bias=parameter(np.zeros((1, fan_out)), name=f"{name}.bias"),
    )


def init_classifier(seed: int, feature_dim: int, num_classes: int) -> AffineLayer:
    """Fan-based uniform classifier; biases start at zero."""
    return _uniform_layer(make_rng(seed, "classifier"), feature_dim, num_classes, "classifier")


def init_model(seed: int, dims: ModelDims, encoder_frozen: bool = False) -> SourceModel:
    """
    Build a randomly initialized source model.

    Weights ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases are zero.
    Deterministic given (seed, dims).
    """
    widths = dims.encoder_widths
    layers = [
        _uniform_layer(make_rng(seed, "encoder", i), fan_in, fan_out, f"encoder.{i}")
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]))
    ]
    return SourceModel(
        encoder_layers=layers,
        classifier=init_classifier(seed, dims.feature_dim, dims.num_classes),
        encoder_frozen=encoder_frozen,
    )


# =============================================================================
# Forward passes
# =============================================================================


def forward_features(model: SourceModel, x: Union[Matrix, DiffNode]) -> DiffNode:
    """Encoder output M(x): affine + ReLU on hidden layers, affine last."""
    h = x if isinstance(x, DiffNode) else constant(x)
    if h.shape[1] != model.input_dim:
        raise ShapeError(f"Input has {h.shape[1]} columns, encoder expects {model.input_dim}")

    last = len(model.encoder_layers) - 1
    for i, layer in enumerate(model.encoder_layers):
        h = layer(h)
        if i < last:
            h = relu(h)
    return h


def forward_logits(model: SourceModel, x: Union[Matrix, DiffNode]) -> DiffNode:
    """Classifier logits C(M(x))."""
    return model.classifier(forward_features(model, x))
