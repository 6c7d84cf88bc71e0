"""
Query-set evaluation and reference baselines.

These are the only functions that call ``episode.query_y.reveal()``.
"""

import numpy as np

from src.data.domain import DomainSpec
from src.data.episode import Episode
from src.model.network import SourceModel, forward_features, forward_logits
from src.numerics.matrix import Matrix
from src.utils.errors import ContractError


def predict_labels(model: SourceModel, x: Matrix) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    return np.argmax(forward_logits(model, x).value, axis=1)


def evaluate(model: SourceModel, episode: Episode) -> float:
    """Fraction of query rows whose argmax prediction matches the held-out label."""
    if episode.num_query == 0:
        raise ContractError("Episode has no query rows to evaluate")
    predicted = predict_labels(model, episode.query_x)
    return float(np.mean(predicted == episode.query_y.reveal()))


def _nearest_centroid(centroids: Matrix, points: Matrix) -> np.ndarray:
    distances = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(distances, axis=1)


def nearest_centroid_accuracy(model: SourceModel, episode: Episode) -> float:
    """
    Prototype classifier on encoder features.

    Class centroids are the mean support features; each query goes to the
    nearest centroid in Euclidean distance. Needs no classifier training.
    """
    support = forward_features(model, episode.support_x).value
    query = forward_features(model, episode.query_x).value
    centroids = np.stack([support[episode.support_y == c].mean(axis=0) for c in range(episode.way)])
    predicted = _nearest_centroid(centroids, query)
    return float(np.mean(predicted == episode.query_y.reveal()))


def oracle_centroid_accuracy(target: DomainSpec, episode: Episode) -> float:
    """Accuracy of the true (transformed) class means in input space; an upper reference."""
    index = {class_id: i for i, class_id in enumerate(target.class_ids)}
    means = target.mapped_means()[[index[c] for c in episode.class_ids]]
    predicted = _nearest_centroid(means, episode.query_x)
    return float(np.mean(predicted == episode.query_y.reveal()))


def domain_gap(near_accuracy: float, distant_accuracy: float) -> float:
    """Absolute accuracy difference between the near and distant regimes."""
    return abs(near_accuracy - distant_accuracy)
