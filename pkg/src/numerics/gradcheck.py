"""
Finite-difference gradient checker.

Compares analytic gradients from backward() with central differences
(f(x + eps) - f(x - eps)) / (2 eps), entry by entry.
"""

from typing import Callable, Sequence

import numpy as np
from loguru import logger

from src.numerics.autodiff import DiffNode, backward
from src.utils.errors import ContractError

EPS_RANGE = (1e-7, 1e-4)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(|a|, |n|, 1e-8), elementwise."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def grad_check(
    f: Callable[[], DiffNode],
    params: Sequence[DiffNode],
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> float:
    """
    Maximum relative error between analytic and numeric gradients.

    ``f`` must rebuild the graph from the current parameter values on every
    call and return a 1x1 node. Parameter values are restored afterwards.

    Args:
        f: Scalar function of the parameters
        params: Leaf nodes to check
        eps: Central-difference step, within [1e-7, 1e-4]
        tol: Tolerance used only for the debug log of failing entries

    Returns:
        Max relative error over all entries of all parameters
    """
    if not EPS_RANGE[0] <= eps <= EPS_RANGE[1]:
        raise ContractError(f"eps must lie in {list(EPS_RANGE)}, got {eps}")

    for p in params:
        p.zero_grad()
    backward(f())
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, grad in zip(params, analytic):
        numeric = np.zeros_like(p.value)
        for idx in np.ndindex(p.value.shape):
            original = p.value[idx]
            p.value[idx] = original + eps
            f_plus = float(f().value[0, 0])
            p.value[idx] = original - eps
            f_minus = float(f().value[0, 0])
            p.value[idx] = original
            numeric[idx] = (f_plus - f_minus) / (2.0 * eps)

        err = relative_error(grad, numeric)
        if err.size:
            worst = max(worst, float(err.max()))
            if err.max() > tol:
                logger.debug(
                    f"Gradient mismatch in {p.name or 'param'}: "
                    f"max rel err {err.max():.3e} at {np.unravel_index(err.argmax(), err.shape)}"
                )

    for p in params:
        p.zero_grad()
    return worst
