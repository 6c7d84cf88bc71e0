"""
Distance-aware contrastive loss (optimized upper bound).

    L = -(1/m) sum_t sum_{i != t} w+_{t,i} (p_t . p_i)
        + (lambda_N / m) sum_t sum_{i != t} w-_{t,i} (p_t . p_i)

p_t is the live, gradient-carrying prediction of anchor t; p_i are detached
bank predictions. Both double sums are computed as Hadamard products with the
m x m similarity matrix P_live @ P_bank^T.
"""

from enum import Enum
from typing import Optional, Tuple, Union

from pydantic import BaseModel, Field

from src.dcl.bank import MemoryBank
from src.dcl.weights import (
    WeightScheme,
    negative_weight_node,
    positive_weight_matrix,
    top_k_positive_matrix,
    unweighted_matrices,
)
from src.numerics.autodiff import DiffNode, constant, matmul, mul, reduce_sum, scale
from src.numerics.matrix import Matrix
from src.utils.errors import ShapeError, StaleBankError


class DclMode(str, Enum):
    FULL = "Full"
    TOPK = "TopK"


class DclOptions(BaseModel):
    """How the positive set is formed."""

    mode: DclMode = Field(default=DclMode.FULL, description="Full soft set or top-k selection")
    top_k: int = Field(default=5, ge=1, description="Positives kept per anchor in TopK mode")
    sigma: float = Field(default=2.0, gt=0.0, description="Support-row boost in TopK mode")
    weighted: bool = Field(
        default=True, description="False drops distance weights (k-NN positives, unit weights)"
    )


ContrastiveWeights = Tuple[Matrix, Union[DiffNode, Matrix]]


def contrastive_weights(
    bank: MemoryBank, scheme: WeightScheme, options: Optional[DclOptions] = None
) -> Tuple[Matrix, DiffNode]:
    """Positive (constant) and negative (possibly learnable) m x m weight matrices."""
    options = options or DclOptions()

    if not options.weighted:
        positive, negative = unweighted_matrices(bank, options.top_k)
        return positive, constant(negative)

    full_positive = positive_weight_matrix(bank)
    negative = negative_weight_node(scheme, full_positive)
    if options.mode is DclMode.TOPK:
        return top_k_positive_matrix(full_positive, bank, options.top_k, options.sigma), negative
    return full_positive, negative


def dcl_loss(
    live_predictions: DiffNode,
    bank: MemoryBank,
    scheme: WeightScheme,
    lambda_n_value: float,
    options: Optional[DclOptions] = None,
    weights: Optional[ContrastiveWeights] = None,
) -> DiffNode:
    """
    Contrastive upper-bound loss for all m anchors.

    Args:
        live_predictions: m x N softmax rows carrying gradients
        bank: Detached snapshot of the same m rows
        scheme: Negative-weight inversion
        lambda_n_value: Repulsion coefficient for this epoch
        options: Full or top-k positive sets
        weights: Precomputed (positive, negative) matrices; overrides scheme/options

    Raises:
        StaleBankError: If the bank has a different row count
        ShapeError: If the class counts differ
    """
    m, n = live_predictions.shape
    if bank.size != m:
        raise StaleBankError(f"Bank has {bank.size} rows, live predictions have {m}")
    if bank.predictions.shape[1] != n:
        raise ShapeError(f"Bank has {bank.predictions.shape[1]} classes, live predictions {n}")

    if weights is None:
        positive, negative = contrastive_weights(bank, scheme, options)
    else:
        positive, negative = weights
    negative_node = negative if isinstance(negative, DiffNode) else constant(negative)
    if positive.shape != (m, m) or negative_node.shape != (m, m):
        raise ShapeError(f"Weight matrices must be {m}x{m}")

    similarity = matmul(live_predictions, constant(bank.predictions.T))
    attract = reduce_sum(mul(constant(positive), similarity))
    repel = reduce_sum(mul(negative_node, similarity))
    return scale(attract, -1.0 / m) + scale(repel, lambda_n_value / m)
