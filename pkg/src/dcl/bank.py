"""
Memory bank of target features and predictions.

The bank is a detached snapshot: its arrays carry no graph history, so
gradients reach the model only through each anchor's live prediction.
Rows are ordered support first, then query, matching Episode.all_x().
"""

from dataclasses import dataclass

import numpy as np

from src.data.episode import Episode
from src.model.network import SourceModel, forward_features
from src.numerics.matrix import Matrix, softmax_rows
from src.utils.errors import ContractError, ShapeError

# support_labels entry for rows that came from the query set
QUERY_ROW = -1


@dataclass(frozen=True)
class MemoryBank:
    """All m target features (m x d), their softmax predictions (m x N) and origins."""

    features: Matrix
    predictions: Matrix
    support_labels: np.ndarray

    def __post_init__(self) -> None:
        m = self.features.shape[0]
        if self.predictions.shape[0] != m or self.support_labels.shape != (m,):
            raise ShapeError(
                f"Bank parts disagree: {m} features, {self.predictions.shape[0]} predictions, "
                f"{self.support_labels.shape} origins"
            )
        row_sums = self.predictions.sum(axis=1)
        if not np.allclose(row_sums, 1.0, rtol=0.0, atol=1e-9):
            raise ContractError("Bank predictions must be probability rows")

    @property
    def size(self) -> int:
        return int(self.features.shape[0])

    @property
    def is_support(self) -> np.ndarray:
        return self.support_labels != QUERY_ROW

    @property
    def num_support(self) -> int:
        return int(self.is_support.sum())


def refresh_bank(model: SourceModel, episode: Episode) -> MemoryBank:
    """Recompute every target feature and prediction as a detached snapshot."""
    features = forward_features(model, episode.all_x())
    logits = model.classifier(features)
    origins = np.concatenate(
        [episode.support_y.astype(np.int64), np.full(episode.num_query, QUERY_ROW, dtype=np.int64)]
    )
    return MemoryBank(
        features=features.value.copy(),
        predictions=softmax_rows(logits.value),
        support_labels=origins,
    )
