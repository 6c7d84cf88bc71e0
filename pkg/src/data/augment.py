"""Feature-space Gaussian jitter, the stand-in for image augmentation."""

import numpy as np

from src.numerics.matrix import Matrix
from src.utils.errors import ContractError
from src.utils.seeding import make_rng


def jitter(x: Matrix, sigma: float, seed: int) -> Matrix:
    """x + sigma * N(0, 1) noise, deterministic per seed."""
    if sigma < 0:
        raise ContractError(f"Jitter sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return x.copy()
    return x + sigma * make_rng(seed, "jitter").standard_normal(x.shape)
