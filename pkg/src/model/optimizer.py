"""
SGD with momentum and coupled weight decay.

Update rule, per parameter:
    v <- momentum * v + (grad + weight_decay * param)
    param <- param - lr * v

Parameters whose ``requires_grad`` is False (a frozen encoder) are skipped.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from src.numerics.autodiff import DiffNode
from src.numerics.matrix import Matrix
from src.utils.errors import ShapeError


@dataclass
class SgdState:
    """Hyperparameters plus one velocity buffer per parameter."""

    lr: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: List[Matrix] = field(default_factory=list)

    @classmethod
    def for_params(
        cls,
        params: Sequence[DiffNode],
        lr: float,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
    ) -> "SgdState":
        return cls(
            lr=lr,
            momentum=momentum,
            weight_decay=weight_decay,
            velocity=[np.zeros_like(p.value) for p in params],
        )


def sgd_step(
    state: SgdState,
    params: Sequence[DiffNode],
    grads: Optional[Sequence[Matrix]] = None,
) -> Sequence[DiffNode]:
    """
    Apply one momentum step in place.

    Args:
        state: Optimizer state; velocities are created on first use
        params: Parameters to update
        grads: Gradients aligned with params (defaults to each param's .grad)

    Returns:
        The updated parameters
    """
    if grads is None:
        grads = [p.grad for p in params]
    if not state.velocity:
        state.velocity = [np.zeros_like(p.value) for p in params]
    if not len(params) == len(grads) == len(state.velocity):
        raise ShapeError(
            f"{len(params)} params, {len(grads)} grads, {len(state.velocity)} velocities"
        )

    for p, g, v in zip(params, grads, state.velocity):
        if p.value.shape != g.shape or p.value.shape != v.shape:
            raise ShapeError(
                f"Shape mismatch: param {p.value.shape}, grad {g.shape}, velocity {v.shape}"
            )
        if not p.requires_grad:
            continue
        v *= state.momentum
        v += g + state.weight_decay * p.value
        p.value -= state.lr * v

    return params


class MomentumSGD:
    """
    Stateful wrapper binding an SgdState to a fixed parameter list.

    Example:
        opt = MomentumSGD(model.parameters(), lr=0.01, momentum=0.9, weight_decay=1e-3)
        opt.zero_grad()
        backward(loss)
        opt.step()
    """

    def __init__(
        self,
        params: Sequence[DiffNode],
        lr: float,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.state = SgdState.for_params(self.params, lr, momentum, weight_decay)

    def step(self) -> None:
        sgd_step(self.state, self.params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
