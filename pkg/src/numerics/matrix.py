"""
Dense matrix helpers.

A Matrix is a 2-D numpy array of float64. These helpers validate shape and
finiteness and provide the few numerically careful kernels (stable softmax,
clamped log, cosine similarity) the rest of the package relies on.
"""

from typing import Any

import numpy as np
import numpy.typing as npt

from src.utils.errors import DegenerateFeatureError, NumericalError, ShapeError

Matrix = npt.NDArray[np.float64]

# Floor applied inside every log so exact zeros give log(1e-12), not -inf
LOG_FLOOR = 1e-12

# Norm below which a feature vector has no direction
NORM_FLOOR = 1e-12


def as_matrix(data: Any) -> Matrix:
    """
    Convert input to a finite 2-D float64 array.

    1-D input becomes a single row; scalars become 1x1.

    Raises:
        ShapeError: If the input has more than two dimensions
        NumericalError: If any entry is NaN or infinite
    """
    array = np.array(data, dtype=np.float64)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    elif array.ndim == 1:
        array = array.reshape(1, -1)
    elif array.ndim > 2:
        raise ShapeError(f"Matrix must be 2-D, got shape {array.shape}")
    ensure_finite(array)
    return array


def ensure_finite(array: np.ndarray, what: str = "matrix") -> None:
    """Raise NumericalError if the array holds NaN or Inf."""
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"Non-finite values in {what} of shape {array.shape}")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """
    Standard matrix product.

    Raises:
        ShapeError: If a.cols != b.rows
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"Cannot multiply {a.shape} by {b.shape}")
    out = a @ b
    ensure_finite(out, "matmul result")
    return out


def softmax_rows(z: Matrix) -> Matrix:
    """Row-wise softmax with per-row max subtraction."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def clamped_log(x: np.ndarray) -> np.ndarray:
    """log(max(x, LOG_FLOOR))."""
    return np.log(np.maximum(x, LOG_FLOOR))


def one_hot(labels: np.ndarray, num_classes: int) -> Matrix:
    """One-hot encode integer labels into an m x num_classes matrix."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def cosine_sim(f_i: np.ndarray, f_t: np.ndarray) -> float:
    """
    Cosine similarity of two vectors.

    Raises:
        DegenerateFeatureError: If either norm is below NORM_FLOOR
    """
    f_i = np.ravel(f_i)
    f_t = np.ravel(f_t)
    if f_i.shape != f_t.shape:
        raise ShapeError(f"Vector length mismatch: {f_i.shape} vs {f_t.shape}")
    n_i = float(np.linalg.norm(f_i))
    n_t = float(np.linalg.norm(f_t))
    if n_i < NORM_FLOOR or n_t < NORM_FLOOR:
        raise DegenerateFeatureError(
            f"Cannot take cosine of a near-zero vector (norms {n_i:.3e}, {n_t:.3e})"
        )
    return float(np.clip(np.dot(f_i, f_t) / (n_i * n_t), -1.0, 1.0))


def cosine_matrix(features: Matrix) -> Matrix:
    """
    Pairwise cosine similarities between the rows of ``features``.

    Raises:
        DegenerateFeatureError: If any row has norm below NORM_FLOOR
    """
    norms = np.linalg.norm(features, axis=1)
    bad = np.flatnonzero(norms < NORM_FLOOR)
    if bad.size:
        raise DegenerateFeatureError(
            f"Feature rows {bad.tolist()} are near zero; cosine undefined"
        )
    unit = features / norms[:, None]
    return np.clip(unit @ unit.T, -1.0, 1.0)
