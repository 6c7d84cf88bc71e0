"""
Gradient-check suite over every differentiable objective.

Each case builds a tiny model and episode from a seed, then compares
analytic gradients against central differences for all parameters that the
loss reaches. Used by ``imdcl gradcheck`` and the test suite.
"""

from dataclasses import dataclass
from typing import Dict, List

from loguru import logger

from src.data.domain import DomainConfig, make_domain_pair
from src.data.episode import Episode, sample_episode
from src.dcl.bank import refresh_bank
from src.dcl.loss import DclOptions, dcl_loss
from src.dcl.weights import SchemeVariant, WeightScheme
from src.losses.im import LossWeights, ce_loss, certainty_loss, diversity_loss, im_loss
from src.model.network import ModelDims, SourceModel, forward_logits, init_model
from src.numerics.autodiff import DiffNode, scale, softmax_rows
from src.numerics.gradcheck import grad_check
from src.utils.seeding import derive_seed

GRADCHECK_TOL = 1e-4
GRADCHECK_EPS = 1e-5

# Small enough that a central-difference sweep stays fast
_TOY_DOMAIN = DomainConfig(
    input_dim=4,
    source_classes=2,
    target_classes=3,
    source_samples_per_class=2,
    target_samples_per_class=4,
    shift_severity=0.5,
)
_TOY_DIMS = ModelDims(input_dim=4, hidden_dims=[5], feature_dim=3, num_classes=2)
_TOY_SHOT, _TOY_QUERIES = 1, 2


@dataclass
class _Case:
    model: SourceModel
    episode: Episode


def _toy_case(seed: int) -> _Case:
    pair = make_domain_pair(_TOY_DOMAIN, derive_seed(seed, "gradcheck", "domain"))
    episode = sample_episode(
        pair.target, _TOY_DIMS.num_classes, _TOY_SHOT, _TOY_QUERIES, derive_seed(seed, "episode")
    )
    model = init_model(derive_seed(seed, "gradcheck", "model"), _TOY_DIMS)
    return _Case(model=model, episode=episode)


def _objectives(case: _Case) -> Dict[str, tuple]:
    """name -> (closure, params)."""
    model, episode = case.model, case.episode
    weights = LossWeights()
    params = model.parameters()
    bank = refresh_bank(model, episode)
    lambda_n = 0.5

    def support_logits() -> DiffNode:
        return forward_logits(model, episode.support_x)

    def all_logits() -> DiffNode:
        return forward_logits(model, episode.all_x())

    cases: Dict[str, tuple] = {
        "ce": (lambda: ce_loss(support_logits(), episode.support_y), params),
        "certainty": (lambda: certainty_loss(all_logits()), params),
        "diversity": (lambda: diversity_loss(all_logits()), params),
        "im": (lambda: im_loss(all_logits(), weights), params),
        "support_objective": (
            lambda: ce_loss(support_logits(), episode.support_y)
            + scale(im_loss(support_logits(), weights), weights.lambda_im),
            params,
        ),
    }

    for variant in SchemeVariant:
        scheme = WeightScheme.create(variant)

        def contrastive(scheme: WeightScheme = scheme) -> DiffNode:
            return dcl_loss(softmax_rows(all_logits()), bank, scheme, lambda_n, DclOptions())

        cases[f"dcl[{variant.value}]"] = (contrastive, params + scheme.parameters())

    logistic = WeightScheme.create(SchemeVariant.NONLINEAR_LOGISTIC)

    def transductive_objective() -> DiffNode:
        logits = all_logits()
        return im_loss(logits, weights) + scale(
            dcl_loss(softmax_rows(logits), bank, logistic, lambda_n, DclOptions()),
            weights.lambda_dcl,
        )

    cases["transductive_objective"] = (transductive_objective, params + logistic.parameters())
    return cases


def run_gradcheck_suite(seed: int = 0, instances: int = 20) -> Dict[str, float]:
    """
    Worst relative gradient error per objective over ``instances`` random cases.

    Returns:
        objective name -> max relative error (pass if <= 1e-4)
    """
    worst: Dict[str, float] = {}
    for i in range(instances):
        case = _toy_case(derive_seed(seed, "gradcheck", i))
        for name, (closure, params) in _objectives(case).items():
            err = grad_check(closure, params, eps=GRADCHECK_EPS, tol=GRADCHECK_TOL)
            worst[name] = max(worst.get(name, 0.0), err)

    for name, err in worst.items():
        status = "ok" if err <= GRADCHECK_TOL else "FAIL"
        logger.info(f"gradcheck {name}: max rel err {err:.2e} [{status}]")
    return worst


def failing_objectives(results: Dict[str, float], tol: float = GRADCHECK_TOL) -> List[str]:
    return [name for name, err in results.items() if err > tol]
