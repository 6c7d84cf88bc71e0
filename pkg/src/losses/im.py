"""
Supervised and information-maximization losses.

All losses take logits (m x N) and return a 1x1 DiffNode so they compose
into the phase objectives and differentiate end to end.

- ce_loss:        mean_i -log softmax(z_i)[y_i]
- certainty_loss: mean_i H(softmax(z_i))              (in [0, ln N])
- diversity_loss: sum_n p_hat_n log p_hat_n           (in [-ln N, 0])
- im_loss:        lambda_cer * certainty + lambda_div * diversity
"""

from typing import Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from src.numerics.autodiff import (
    DiffNode,
    constant,
    log,
    mean,
    mul,
    reduce_sum,
    scale,
    softmax_rows,
)
from src.numerics.matrix import Matrix, one_hot
from src.utils.errors import ContractError, ShapeError

Logits = Union[DiffNode, Matrix]


class LossWeights(BaseModel):
    """Coefficients of the certainty, diversity, IM and contrastive terms."""

    lambda_cer: float = Field(default=1.0, ge=0.0, description="Certainty weight in L_IM")
    lambda_div: float = Field(default=1.0, ge=0.0, description="Diversity weight in L_IM")
    lambda_im: float = Field(default=1.0, ge=0.0, description="IM weight in L_s")
    lambda_dcl: float = Field(default=0.1, ge=0.0, description="Contrastive weight in L_q")


def _as_node(logits: Logits) -> DiffNode:
    node = logits if isinstance(logits, DiffNode) else constant(logits)
    if node.shape[0] < 1:
        raise ContractError("Losses need at least one row")
    return node


def ce_loss(logits: Logits, labels: Sequence[int]) -> DiffNode:
    """
    Mean cross-entropy of integer labels under row softmax.

    Raises:
        ContractError: If a label is outside [0, N)
        ShapeError: If the label count differs from the row count
    """
    z = _as_node(logits)
    m, n = z.shape
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (m,):
        raise ShapeError(f"{y.shape[0] if y.ndim else 0} labels for {m} rows")
    if y.size and (y.min() < 0 or y.max() >= n):
        raise ContractError(f"Labels must lie in [0, {n}), got range [{y.min()}, {y.max()}]")

    log_probs = log(softmax_rows(z))
    picked = reduce_sum(mul(constant(one_hot(y, n)), log_probs))
    return scale(picked, -1.0 / m)


def certainty_loss(logits: Logits) -> DiffNode:
    """Mean Shannon entropy of the row predictions (minimized toward 0)."""
    z = _as_node(logits)
    p = softmax_rows(z)
    return scale(reduce_sum(mul(p, log(p))), -1.0 / z.shape[0])


def diversity_loss(logits: Logits) -> DiffNode:
    """Negative entropy of the batch-mean prediction (minimized toward -ln N)."""
    z = _as_node(logits)
    p_hat = mean(softmax_rows(z), axis=0)
    return reduce_sum(mul(p_hat, log(p_hat)))


def im_loss(logits: Logits, weights: LossWeights) -> DiffNode:
    """
    lambda_cer * certainty_loss + lambda_div * diversity_loss.

    Zeroing lambda_cer or lambda_div leaves the other term on its own.
    """
    z = _as_node(logits)
    return scale(certainty_loss(z), weights.lambda_cer) + scale(
        diversity_loss(z), weights.lambda_div
    )
