"""
Reverse-mode differentiation over 2-D float64 matrices.

Each DiffNode holds a value, a zero-initialized gradient of the same shape,
its parents and a closure that pushes its gradient into them. Calling
backward() on a 1x1 root sweeps the graph in reverse topological order.

Supported primitives: matmul, add, mul (elementwise), softmax_rows, log
(clamped), exp, sum, mean, scale, transpose, gather_rows, l2norm_rows,
concat_rows, sigmoid. relu is a composition of these.

Example:
    w = parameter([[1.0, 2.0], [3.0, 4.0]])
    loss = reduce_sum(w * w)
    backward(loss)
    w.grad  # [[2, 4], [6, 8]]
"""

from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.numerics.matrix import (
    LOG_FLOOR,
    Matrix,
    as_matrix,
    ensure_finite,
    softmax_rows as _softmax_rows,
)
from src.utils.errors import ContractError, ShapeError

Operand = Union["DiffNode", float, int, np.ndarray]


class DiffNode:
    """A value in a reverse-mode computation graph."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        value: Matrix,
        parents: Tuple["DiffNode", ...] = (),
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        ensure_finite(value, name or "node value")
        self.value = value
        self.grad = np.zeros_like(value)
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward: Optional[Callable[[], None]] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def detach(self) -> "DiffNode":
        """A constant node sharing no graph history (value is copied)."""
        return DiffNode(self.value.copy())

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"DiffNode{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar ----------------------------------------------------------
    def __add__(self, other: Operand) -> "DiffNode":
        return add(self, other)

    def __radd__(self, other: Operand) -> "DiffNode":
        return add(other, self)

    def __sub__(self, other: Operand) -> "DiffNode":
        return add(self, scale(_lift(other), -1.0))

    def __rsub__(self, other: Operand) -> "DiffNode":
        return add(other, scale(self, -1.0))

    def __mul__(self, other: Operand) -> "DiffNode":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "DiffNode":
        return mul(other, self)

    def __neg__(self) -> "DiffNode":
        return scale(self, -1.0)

    def __matmul__(self, other: Operand) -> "DiffNode":
        return matmul(self, other)


# =============================================================================
# Leaf constructors
# =============================================================================


def constant(data: Operand) -> DiffNode:
    """A node that never receives gradients."""
    if isinstance(data, DiffNode):
        return data
    return DiffNode(as_matrix(data))


def parameter(data: Operand, name: Optional[str] = None) -> DiffNode:
    """A trainable leaf node (copies its input)."""
    value = data.value if isinstance(data, DiffNode) else data
    return DiffNode(as_matrix(value).copy(), requires_grad=True, name=name)


def _lift(x: Operand) -> DiffNode:
    return x if isinstance(x, DiffNode) else constant(x)


def _result(value: Matrix, parents: Tuple[DiffNode, ...]) -> DiffNode:
    return DiffNode(value, parents, requires_grad=any(p.requires_grad for p in parents))


def _unbroadcast(g: Matrix, shape: Tuple[int, ...]) -> Matrix:
    """Sum g over the axes along which an operand of ``shape`` was broadcast."""
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: DiffNode, b: DiffNode) -> Tuple[int, int]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)  # type: ignore[return-value]
    except ValueError as e:
        raise ShapeError(f"Cannot broadcast {a.shape} with {b.shape}") from e


# =============================================================================
# Primitives
# =============================================================================


def matmul(a: Operand, b: Operand) -> DiffNode:
    a, b = _lift(a), _lift(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"Cannot multiply {a.shape} by {b.shape}")
    out = _result(a.value @ b.value, (a, b))

    def _backward() -> None:
        if a.requires_grad:
            a.grad += out.grad @ b.value.T
        if b.requires_grad:
            b.grad += a.value.T @ out.grad

    out._backward = _backward
    return out


def add(a: Operand, b: Operand) -> DiffNode:
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b)
    out = _result(a.value + b.value, (a, b))

    def _backward() -> None:
        if a.requires_grad:
            a.grad += _unbroadcast(out.grad, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(out.grad, b.shape)

    out._backward = _backward
    return out


def mul(a: Operand, b: Operand) -> DiffNode:
    """Elementwise (Hadamard) product with row/column broadcasting."""
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b)
    out = _result(a.value * b.value, (a, b))

    def _backward() -> None:
        if a.requires_grad:
            a.grad += _unbroadcast(out.grad * b.value, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(out.grad * a.value, b.shape)

    out._backward = _backward
    return out


def scale(a: Operand, c: float) -> DiffNode:
    a = _lift(a)
    out = _result(a.value * c, (a,))

    def _backward() -> None:
        if a.requires_grad:
            a.grad += c * out.grad

    out._backward = _backward
    return out


def softmax_rows(a: Operand) -> DiffNode:
    a = _lift(a)
    s = _softmax_rows(a.value)
    out = _result(s, (a,))

    def _backward() -> None:
        if a.requires_grad:
            g = out.grad
            a.grad += s * (g - (g * s).sum(axis=1, keepdims=True))

    out._backward = _backward
    return out


def log(a: Operand) -> DiffNode:
    """Clamped natural log: log(max(x, 1e-12)); zero gradient below the floor."""
    a = _lift(a)
    active = a.value > LOG_FLOOR
    safe = np.where(active, a.value, LOG_FLOOR)
    out = _result(np.log(safe), (a,))

    def _backward() -> None:
        if a.requires_grad:
            a.grad += np.where(active, out.grad / safe, 0.0)

    out._backward = _backward
    return out


def exp(a: Operand) -> DiffNode:
    a = _lift(a)
    e = np.exp(a.value)
    out = _result(e, (a,))

    def _backward() -> None:
        if a.requires_grad:
            a.grad += out.grad * e

    out._backward = _backward
    return out


def reduce_sum(a: Operand, axis: Optional[int] = None) -> DiffNode:
    """Sum of all entries (1x1) or along an axis (kept as a row/column)."""
    a = _lift(a)
    if axis is None:
        value = np.array([[a.value.sum()]])
    else:
        value = a.value.sum(axis=axis, keepdims=True)
    out = _result(value, (a,))

    def _backward() -> None:
        if a.requires_grad:
            a.grad += np.broadcast_to(out.grad, a.shape)

    out._backward = _backward
    return out


def mean(a: Operand, axis: Optional[int] = None) -> DiffNode:
    a = _lift(a)
    count = a.value.size if axis is None else a.shape[axis]
    return scale(reduce_sum(a, axis=axis), 1.0 / count)


def transpose(a: Operand) -> DiffNode:
    a = _lift(a)
    out = _result(a.value.T.copy(), (a,))

    def _backward() -> None:
        if a.requires_grad:
            a.grad += out.grad.T

    out._backward = _backward
    return out


def gather_rows(a: Operand, index: Sequence[int]) -> DiffNode:
    """Select rows by index (repeats allowed)."""
    a = _lift(a)
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < -a.shape[0] or idx.max() >= a.shape[0]):
        raise ShapeError(f"Row index out of range for {a.shape[0]} rows")
    out = _result(a.value[idx].copy(), (a,))

    def _backward() -> None:
        if a.requires_grad:
            np.add.at(a.grad, idx, out.grad)

    out._backward = _backward
    return out


def l2norm_rows(a: Operand) -> DiffNode:
    """Euclidean norm of each row as an m x 1 column."""
    a = _lift(a)
    norms = np.linalg.norm(a.value, axis=1, keepdims=True)
    out = _result(norms, (a,))

    def _backward() -> None:
        if a.requires_grad:
            safe = np.where(norms > 0.0, norms, 1.0)
            a.grad += out.grad * np.where(norms > 0.0, a.value / safe, 0.0)

    out._backward = _backward
    return out


def concat_rows(nodes: Iterable[Operand]) -> DiffNode:
    parts = [_lift(n) for n in nodes]
    if not parts:
        raise ContractError("concat_rows needs at least one operand")
    cols = {p.shape[1] for p in parts}
    if len(cols) != 1:
        raise ShapeError(f"Column counts differ: {sorted(cols)}")
    out = _result(np.vstack([p.value for p in parts]), tuple(parts))
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def _backward() -> None:
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p.grad += out.grad[lo:hi]

    out._backward = _backward
    return out


def sigmoid(a: Operand) -> DiffNode:
    """
    1 / (1 + exp(-x)), evaluated per sign so exp never sees a large positive argument.

    x >= 0 uses 1 / (1 + exp(-x)); x < 0 uses exp(x) / (1 + exp(x)).
    """
    a = _lift(a)
    e = np.exp(-np.abs(a.value))
    s = np.where(a.value >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = _result(s, (a,))

    def _backward() -> None:
        if a.requires_grad:
            a.grad += out.grad * s * (1.0 - s)

    out._backward = _backward
    return out


# =============================================================================
# Compositions
# =============================================================================


def relu(a: Operand) -> DiffNode:
    """max(x, 0) as multiplication by a constant 0/1 mask."""
    a = _lift(a)
    return mul(a, constant((a.value > 0.0).astype(np.float64)))


# =============================================================================
# Backward sweep
# =============================================================================


def _topological_order(root: DiffNode) -> List[DiffNode]:
    topo: List[DiffNode] = []
    visited = set()
    stack = [(root, False)]

    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in visited:
                stack.append((parent, False))

    return topo


def backward(root: DiffNode) -> None:
    """
    Populate gradients of every requires_grad ancestor of ``root``.

    Gradients accumulate into existing .grad buffers; zero them between
    steps.

    Raises:
        ContractError: If root is not 1x1
    """
    if root.shape != (1, 1):
        raise ContractError(f"backward() needs a 1x1 root, got {root.shape}")

    root.grad = np.ones((1, 1))
    for node in reversed(_topological_order(root)):
        if node._backward is not None and node.requires_grad:
            node._backward()
