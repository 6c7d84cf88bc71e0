"""
Deterministic seed derivation.

Every random stream in a run is derived from the single top-level seed and a
stream path, e.g. derive_seed(seed, "episode", 17). Changing the top-level
seed changes every stream; adding a stream never disturbs the others.
"""

import zlib
from typing import Union

import numpy as np

StreamKey = Union[int, str]


def _key_to_int(key: StreamKey) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError(f"Stream keys must be non-negative, got {key}")
    return int(key)


def derive_seed(seed: int, *stream: StreamKey) -> int:
    """
    Derive a child seed from a root seed and a stream path.

    Args:
        seed: Root seed
        *stream: Names or indices identifying the stream

    Returns:
        A 63-bit non-negative integer seed
    """
    entropy = [_key_to_int(seed)] + [_key_to_int(k) for k in stream]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def make_rng(seed: int, *stream: StreamKey) -> np.random.Generator:
    """Create a numpy Generator for the given stream."""
    return np.random.default_rng(derive_seed(seed, *stream))
