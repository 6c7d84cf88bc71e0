"""
Model checkpoint file.

Layout (JSON, format_version 1):

    {
      "format_version": 1,
      "input_dim": 16, "hidden_dims": [64, 64], "feature_dim": 32,
      "num_classes": 20, "encoder_frozen": false,
      "encoder": [{"weight": [[...], ...], "bias": [[...]]}, ...],
      "classifier": {"weight": [[...]], "bias": [[...]]}
    }

Floats are written with Python's shortest round-trip repr, so a saved and
reloaded model is bit-identical.
"""

import json
from pathlib import Path
from typing import List, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from src.model.network import AffineLayer, SourceModel
from src.numerics.autodiff import parameter
from src.utils.errors import ContractError

CHECKPOINT_FORMAT_VERSION = 1


class LayerArrays(BaseModel):
    """Weight (d_in x d_out) and bias (1 x d_out) as nested lists."""

    weight: List[List[float]]
    bias: List[List[float]]


class CheckpointFile(BaseModel):
    """On-disk schema of a SourceModel."""

    format_version: int = Field(default=CHECKPOINT_FORMAT_VERSION)
    input_dim: int = Field(..., ge=1)
    hidden_dims: List[int]
    feature_dim: int = Field(..., ge=1)
    num_classes: int = Field(..., ge=1)
    encoder_frozen: bool = False
    encoder: List[LayerArrays]
    classifier: LayerArrays


def _layer_arrays(layer: AffineLayer) -> LayerArrays:
    return LayerArrays(weight=layer.weight.value.tolist(), bias=layer.bias.value.tolist())


def _layer_from_arrays(arrays: LayerArrays, name: str) -> AffineLayer:
    return AffineLayer(
        weight=parameter(np.array(arrays.weight, dtype=np.float64), name=f"{name}.weight"),
        bias=parameter(np.array(arrays.bias, dtype=np.float64), name=f"{name}.bias"),
    )


def to_checkpoint(model: SourceModel) -> CheckpointFile:
    return CheckpointFile(
        input_dim=model.input_dim,
        hidden_dims=model.hidden_dims,
        feature_dim=model.feature_dim,
        num_classes=model.num_classes,
        encoder_frozen=model.encoder_frozen,
        encoder=[_layer_arrays(layer) for layer in model.encoder_layers],
        classifier=_layer_arrays(model.classifier),
    )


def from_checkpoint(checkpoint: CheckpointFile) -> SourceModel:
    if checkpoint.format_version != CHECKPOINT_FORMAT_VERSION:
        raise ContractError(
            f"Unsupported checkpoint format {checkpoint.format_version}, "
            f"expected {CHECKPOINT_FORMAT_VERSION}"
        )
    model = SourceModel(
        encoder_layers=[
            _layer_from_arrays(arrays, f"encoder.{i}")
            for i, arrays in enumerate(checkpoint.encoder)
        ],
        classifier=_layer_from_arrays(checkpoint.classifier, "classifier"),
        encoder_frozen=checkpoint.encoder_frozen,
    )
    if model.hidden_dims != checkpoint.hidden_dims or model.num_classes != checkpoint.num_classes:
        raise ContractError("Checkpoint header does not match its parameter arrays")
    return model


def save_checkpoint(model: SourceModel, path: Union[str, Path]) -> Path:
    """Write ``model`` as JSON; returns the written path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(to_checkpoint(model).model_dump(mode="json")), encoding="utf-8"
    )
    logger.info(f"Checkpoint written: {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> SourceModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    checkpoint = CheckpointFile.model_validate_json(path.read_text(encoding="utf-8"))
    logger.info(f"Checkpoint loaded: {path}")
    return from_checkpoint(checkpoint)
