"""Finite-difference checker and the per-objective gradient suite."""

import numpy as np
import pytest

from src.losses.im import ce_loss
from src.numerics.autodiff import (
    DiffNode,
    add,
    constant,
    exp,
    log,
    matmul,
    mul,
    parameter,
    reduce_sum,
    sigmoid,
    softmax_rows,
    transpose,
)
from src.numerics.gradcheck import grad_check, relative_error
from src.pipeline.diagnostics import failing_objectives, run_gradcheck_suite
from src.utils.errors import ContractError

SUITE_OBJECTIVES = {
    "ce",
    "certainty",
    "diversity",
    "im",
    "support_objective",
    "dcl[ReverseOrder]",
    "dcl[Opposite]",
    "dcl[NonlinearLogistic]",
    "transductive_objective",
}


def _square_missing_factor(a: DiffNode) -> DiffNode:
    """a * a with a deliberately wrong backward (drops the factor 2)."""
    out = DiffNode(a.value * a.value, (a,), requires_grad=a.requires_grad)

    def _backward() -> None:
        a.grad += out.grad * a.value

    out._backward = _backward
    return out


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([0.0]))[0] == 0.0
    assert relative_error(np.array([1.0]), np.array([0.5]))[0] == pytest.approx(0.5)


def test_quadratic_is_exact(rng):
    w = parameter(rng.uniform(0.5, 2.0, size=(2, 3)))
    assert grad_check(lambda: reduce_sum(w * w), [w]) < 1e-9


def test_softmax_cross_entropy(rng):
    z = parameter(rng.standard_normal((4, 3)))
    labels = np.array([0, 2, 1, 2])
    assert grad_check(lambda: ce_loss(z, labels), [z]) < 1e-5


def test_detects_wrong_backward(rng):
    w = parameter(rng.uniform(0.5, 2.0, size=(2, 2)))
    assert grad_check(lambda: reduce_sum(_square_missing_factor(w)), [w]) > 0.4


def test_restores_values_and_clears_grads(rng):
    initial = rng.standard_normal((3, 2))
    w = parameter(initial)
    grad_check(lambda: reduce_sum(w * w), [w])
    np.testing.assert_array_equal(w.value, initial)
    np.testing.assert_array_equal(w.grad, np.zeros((3, 2)))


@pytest.mark.parametrize("eps", [1e-8, 1e-3])
def test_eps_out_of_range(eps):
    w = parameter([[1.0]])
    with pytest.raises(ContractError):
        grad_check(lambda: reduce_sum(w * w), [w], eps=eps)


def test_suite_covers_every_objective():
    results = run_gradcheck_suite(seed=0, instances=3)
    assert set(results) == SUITE_OBJECTIVES
    assert failing_objectives(results) == []


@pytest.mark.slow
def test_suite_twenty_instances_within_a_minute():
    import time

    start = time.perf_counter()
    results = run_gradcheck_suite(seed=1, instances=20)
    assert time.perf_counter() - start <= 60.0
    assert failing_objectives(results) == []


# Random graphs: an affine layer, a polynomial stage, then a squashing stage
_POLYNOMIAL = {
    "identity": lambda h: h,
    "square": lambda h: mul(h, h),
    "gram": lambda h: matmul(h, transpose(h)),
}
_SQUASHING = {
    "sigmoid": sigmoid,
    "softmax": softmax_rows,
    "log_softmax": lambda h: log(softmax_rows(h)),
    "exp_sigmoid": lambda h: exp(sigmoid(h)),
}


@pytest.mark.parametrize("seed", range(12))
def test_random_composed_graphs(seed):
    rng = np.random.default_rng(seed)
    rows, inner, cols = (int(v) for v in rng.integers(1, 9, size=3))
    x = parameter(0.5 * rng.standard_normal((rows, inner)))
    w = parameter(rng.standard_normal((inner, cols)) / np.sqrt(inner))
    b = parameter(0.1 * rng.standard_normal((1, cols)))
    polynomial = _POLYNOMIAL[rng.choice(sorted(_POLYNOMIAL))]
    squashing = _SQUASHING[rng.choice(sorted(_SQUASHING))]

    def graph():
        return squashing(polynomial(add(matmul(x, w), b)))

    weights = constant(rng.standard_normal(graph().shape))
    err = grad_check(lambda: reduce_sum(mul(weights, graph())), [x, w, b])
    assert err <= 1e-4
