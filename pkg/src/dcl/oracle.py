"""
Exact weighted likelihood ratio behind the contrastive loss (test oracle).

    q_{t,k} = exp(p_t . p_k) / sum_j exp(p_t . p_j)      over all m bank rows
    log P(pos) = sum_t sum_i w+_{t,i} log q_{t,i}
    log P(neg) = sum_t sum_i w-_{t,i} log q_{t,i}
    nll = -(1/m) [log P(pos) - lambda_N log P(neg)]

Normalizing by m keeps the scale of dcl_loss. When the positive and negative
rows of every anchor have equal sums and lambda_N = 1 the log-partition terms
cancel and nll equals dcl_loss exactly. Quadratic in m; meant for m <= 16.
"""

from typing import Optional, Union

import numpy as np

from src.dcl.bank import MemoryBank
from src.dcl.loss import ContrastiveWeights, DclOptions, contrastive_weights
from src.dcl.weights import WeightScheme
from src.numerics.autodiff import DiffNode
from src.numerics.matrix import Matrix
from src.utils.errors import StaleBankError


def _log_softmax_rows(s: Matrix) -> Matrix:
    shifted = s - s.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def dcl_exact_nll(
    predictions: Union[Matrix, DiffNode],
    bank: MemoryBank,
    scheme: WeightScheme,
    lambda_n_value: float = 1.0,
    options: Optional[DclOptions] = None,
    weights: Optional[ContrastiveWeights] = None,
) -> float:
    """Weighted -log[P(pos) / P(neg)^lambda_N], averaged over anchors."""
    live = predictions.value if isinstance(predictions, DiffNode) else np.asarray(predictions)
    m = live.shape[0]
    if bank.size != m:
        raise StaleBankError(f"Bank has {bank.size} rows, predictions have {m}")

    if weights is None:
        positive, negative = contrastive_weights(bank, scheme, options)
    else:
        positive, negative = weights
    negative_values = negative.value if isinstance(negative, DiffNode) else np.asarray(negative)

    log_q = _log_softmax_rows(live @ bank.predictions.T)
    log_pos = float((positive * log_q).sum())
    log_neg = float((negative_values * log_q).sum())
    return -(log_pos - lambda_n_value * log_neg) / m
