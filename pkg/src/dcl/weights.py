"""
Distance-aware positive and negative weights.

For an anchor t, every other bank row i gets a positive weight from the
cosine similarity of their features, shifted to [0, 1] with (s + 1) / 2 and
divided by the mean over the m - 1 rows. The negative weight inverts it with
one of three schemes:

- ReverseOrder:      the i-th largest positive receives the i-th smallest value
- Opposite:          reflection about the range midpoint, (max + min) - w
- NonlinearLogistic: L / (1 + exp(-k (w - x0))), L = 1, k and x0 learnable

Matrix forms are m x m with a zero diagonal; row t holds anchor t's weights.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from src.dcl.bank import MemoryBank
from src.numerics.autodiff import DiffNode, add, constant, mul, parameter, scale, sigmoid
from src.numerics.matrix import Matrix, cosine_matrix
from src.utils.errors import ContractError

LOGISTIC_L = 1.0
LOGISTIC_K_INIT = -5.0
LOGISTIC_X0_INIT = 1.0

# Row means below this cannot normalize; the row falls back to all ones
MEAN_FLOOR = 1e-12


class SchemeVariant(str, Enum):
    REVERSE_ORDER = "ReverseOrder"
    OPPOSITE = "Opposite"
    NONLINEAR_LOGISTIC = "NonlinearLogistic"


@dataclass
class WeightScheme:
    """Negative-weight inversion; carries the learnable logistic (k, x0) when used."""

    variant: SchemeVariant
    k: Optional[DiffNode] = None
    x0: Optional[DiffNode] = None

    @classmethod
    def create(
        cls,
        variant: SchemeVariant,
        k_init: float = LOGISTIC_K_INIT,
        x0_init: float = LOGISTIC_X0_INIT,
    ) -> "WeightScheme":
        variant = SchemeVariant(variant)
        if variant is SchemeVariant.NONLINEAR_LOGISTIC:
            return cls(
                variant=variant,
                k=parameter([[k_init]], name="logistic.k"),
                x0=parameter([[x0_init]], name="logistic.x0"),
            )
        return cls(variant=variant)

    def parameters(self) -> List[DiffNode]:
        return [p for p in (self.k, self.x0) if p is not None]

    @property
    def is_learnable(self) -> bool:
        return self.variant is SchemeVariant.NONLINEAR_LOGISTIC


@dataclass(frozen=True)
class AnchorWeights:
    """Positive and negative weights of one anchor over the other m - 1 rows."""

    anchor_index: int
    positive: np.ndarray
    negative: np.ndarray


# =============================================================================
# Positive weights
# =============================================================================


def _shifted_cosines(bank: MemoryBank) -> Matrix:
    """(cos + 1) / 2 between every pair of bank features, in [0, 1]."""
    return (cosine_matrix(bank.features) + 1.0) / 2.0


def _normalize_by_mean(shifted: np.ndarray, anchor: int) -> np.ndarray:
    row_mean = shifted.mean()
    if row_mean < MEAN_FLOOR:
        logger.warning(f"Anchor {anchor}: all shifted similarities are zero; using unit weights")
        return np.ones_like(shifted)
    return shifted / row_mean


def positive_weights(bank: MemoryBank, anchor: int) -> np.ndarray:
    """
    Mean-normalized shifted cosine weights of ``anchor`` against every other row.

    Returns:
        (m - 1)-vector ordered by bank row, skipping the anchor
    """
    m = bank.size
    if m < 2:
        raise ContractError("Positive weights need at least 2 bank rows")
    if not 0 <= anchor < m:
        raise ContractError(f"Anchor {anchor} outside bank of {m} rows")

    shifted = np.delete(_shifted_cosines(bank)[anchor], anchor)
    return _normalize_by_mean(shifted, anchor)


def positive_weight_matrix(bank: MemoryBank) -> Matrix:
    """All anchors' positive weights as an m x m matrix with zero diagonal."""
    m = bank.size
    if m < 2:
        raise ContractError("Positive weights need at least 2 bank rows")

    shifted = _shifted_cosines(bank)
    weights = np.zeros_like(shifted)
    for t in range(m):
        others = np.delete(np.arange(m), t)
        weights[t, others] = _normalize_by_mean(shifted[t, others], t)
    return weights


# =============================================================================
# Negative weights
# =============================================================================


def _reverse_order(positive: np.ndarray) -> np.ndarray:
    # Stable sorts break ties by original index
    descending = np.argsort(-positive, kind="stable")
    ascending_values = np.sort(positive, kind="stable")
    negative = np.empty_like(positive)
    negative[descending] = ascending_values
    return negative


def negative_weights(scheme: WeightScheme, positive: np.ndarray) -> np.ndarray:
    """
    Invert a positive-weight vector (values only; see negative_weight_node for gradients).

    Raises:
        ContractError: If ``positive`` is empty
    """
    positive = np.asarray(positive, dtype=np.float64).ravel()
    if positive.size == 0:
        raise ContractError("Cannot invert an empty weight vector")

    if scheme.variant is SchemeVariant.REVERSE_ORDER:
        return _reverse_order(positive)
    if scheme.variant is SchemeVariant.OPPOSITE:
        return (positive.max() + positive.min()) - positive

    k = float(scheme.k.value[0, 0])  # type: ignore[union-attr]
    x0 = float(scheme.x0.value[0, 0])  # type: ignore[union-attr]
    return LOGISTIC_L / (1.0 + np.exp(-k * (positive - x0)))


def negative_weight_node(scheme: WeightScheme, positive_matrix: Matrix) -> DiffNode:
    """
    Negative weights for every anchor as an m x m node with zero diagonal.

    Constant for ReverseOrder/Opposite; differentiable in (k, x0) for the
    logistic map.
    """
    m = positive_matrix.shape[0]
    off_diagonal = 1.0 - np.eye(m)

    if scheme.variant is SchemeVariant.NONLINEAR_LOGISTIC:
        centered = add(constant(positive_matrix), scale(scheme.x0, -1.0))  # type: ignore[arg-type]
        mapped = scale(sigmoid(mul(scheme.k, centered)), LOGISTIC_L)  # type: ignore[arg-type]
        return mul(mapped, constant(off_diagonal))

    negative = np.zeros_like(positive_matrix)
    for t in range(m):
        others = np.delete(np.arange(m), t)
        negative[t, others] = negative_weights(scheme, positive_matrix[t, others])
    return constant(negative)


def anchor_weights(bank: MemoryBank, anchor: int, scheme: WeightScheme) -> AnchorWeights:
    positive = positive_weights(bank, anchor)
    return AnchorWeights(
        anchor_index=anchor, positive=positive, negative=negative_weights(scheme, positive)
    )


# =============================================================================
# Selection variants
# =============================================================================


def top_k_positive_matrix(
    positive_matrix: Matrix, bank: MemoryBank, k: int, sigma: float
) -> Matrix:
    """
    Keep each anchor's k highest positive weights after the support boost.

    A query anchor multiplies every support row by sigma. A support anchor
    multiplies same-label support rows by sigma and drops differently
    labelled support rows from its candidates.
    """
    if k < 1:
        raise ContractError(f"top-k needs k >= 1, got {k}")

    m = positive_matrix.shape[0]
    labels = bank.support_labels
    is_support = bank.is_support
    selected = np.zeros_like(positive_matrix)

    for t in range(m):
        scores = positive_matrix[t].copy()
        candidates = np.ones(m, dtype=bool)
        candidates[t] = False
        if is_support[t]:
            same = is_support & (labels == labels[t])
            scores[same] *= sigma
            candidates &= ~(is_support & (labels != labels[t]))
        else:
            scores[is_support] *= sigma

        pool = np.flatnonzero(candidates)
        if pool.size < k:
            logger.debug(f"Anchor {t}: only {pool.size} top-k candidates for k={k}")
        chosen = pool[np.argsort(-scores[pool], kind="stable")[:k]]
        selected[t, chosen] = scores[chosen]

    return selected


def unweighted_matrices(bank: MemoryBank, k: int) -> Tuple[Matrix, Matrix]:
    """
    Contrastive sets without distance weights.

    Each anchor's k nearest rows by cosine are positives with weight 1; all
    remaining rows are negatives with weight 1.
    """
    if k < 1:
        raise ContractError(f"top-k needs k >= 1, got {k}")

    m = bank.size
    cos = cosine_matrix(bank.features)
    positive = np.zeros((m, m))
    negative = np.zeros((m, m))

    for t in range(m):
        others = np.delete(np.arange(m), t)
        nearest = others[np.argsort(-cos[t, others], kind="stable")[:k]]
        positive[t, nearest] = 1.0
        negative[t, others] = 1.0
        negative[t, nearest] = 0.0

    return positive, negative
