"""
Two-phase episodic adaptation.

Each epoch h runs:

1. Support phase: minimize L_s = CE(support) + lambda_IM * IM(support).
2. Transductive phase (IM and the DCL methods): minimize
   L_q = IM(support + query). The DCL methods first refresh the memory bank
   from the current model and add lambda_DCL * DCL(support + query).

Query labels never enter either objective; they stay sealed inside the
Episode until evaluation.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from loguru import logger

from src.data.augment import jitter
from src.data.episode import Episode
from src.dcl.bank import refresh_bank
from src.dcl.loss import dcl_loss
from src.dcl.schedule import LambdaNSchedule, lambda_for_epoch
from src.dcl.weights import WeightScheme
from src.losses.im import ce_loss, im_loss
from src.model.network import SourceModel, forward_logits
from src.model.optimizer import MomentumSGD
from src.numerics.autodiff import DiffNode, backward, scale, softmax_rows
from src.numerics.matrix import Matrix
from src.pipeline.schemas import AdaptConfig, EpochRecord
from src.utils.errors import NumericalError, ShapeError
from src.utils.seeding import derive_seed


@dataclass
class AdaptResult:
    model: SourceModel
    scheme: WeightScheme
    trajectory: List[EpochRecord] = field(default_factory=list)


def prepare_episode_model(
    source_model: SourceModel, way: int, seed: int, encoder_frozen: bool = False
) -> SourceModel:
    """Copy of the source encoder with a fresh N-way classifier."""
    model = source_model.with_fresh_classifier(way, derive_seed(seed, "classifier"))
    model.freeze_encoder(encoder_frozen)
    return model


def _scalar(node: DiffNode) -> float:
    return float(node.value[0, 0])


def _inputs(x: Matrix, config: AdaptConfig, epoch: int, phase: str) -> Matrix:
    if not config.augment:
        return x
    return jitter(x, config.jitter_sigma, derive_seed(config.seed, "jitter", phase, epoch))


def _support_step(
    model: SourceModel, episode: Episode, config: AdaptConfig, epoch: int, optimizer: MomentumSGD
) -> dict:
    logits = forward_logits(model, _inputs(episode.support_x, config, epoch, "support"))
    ce = ce_loss(logits, episode.support_y)
    if config.method.uses_im_on_support:
        im_support = im_loss(logits, config.loss_weights)
        objective = ce + scale(im_support, config.lambda_im)
    else:
        im_support = None
        objective = ce

    optimizer.zero_grad()
    backward(objective)
    optimizer.step()

    predicted = np.argmax(logits.value, axis=1)
    return {
        "loss_s": _scalar(objective),
        "loss_ce": _scalar(ce),
        "loss_im_support": _scalar(im_support) if im_support is not None else 0.0,
        "support_accuracy": float(np.mean(predicted == episode.support_y)),
    }


def _transductive_step(
    model: SourceModel,
    episode: Episode,
    config: AdaptConfig,
    epoch: int,
    schedule: LambdaNSchedule,
    scheme: WeightScheme,
    optimizer: MomentumSGD,
    scheme_optimizer: Optional[MomentumSGD],
) -> dict:
    logits = forward_logits(model, _inputs(episode.all_x(), config, epoch, "all"))
    im_all = im_loss(logits, config.loss_weights)
    record = {"loss_im_all": _scalar(im_all)}

    if config.method.uses_dcl:
        # Bank is built from clean inputs with the model as of this epoch
        bank = refresh_bank(model, episode)
        lambda_n = lambda_for_epoch(schedule, epoch, config.lambda_n_mode)
        contrastive = dcl_loss(
            softmax_rows(logits), bank, scheme, lambda_n, options=config.dcl_options
        )
        objective = im_all + scale(contrastive, config.lambda_dcl)
        record.update(loss_dcl=_scalar(contrastive), lambda_n=lambda_n)
    else:
        objective = im_all

    optimizer.zero_grad()
    if scheme_optimizer is not None:
        scheme_optimizer.zero_grad()
    backward(objective)
    optimizer.step()
    if scheme_optimizer is not None:
        scheme_optimizer.step()

    record["loss_q"] = _scalar(objective)
    return record


def adapt_episode(model: SourceModel, episode: Episode, config: AdaptConfig) -> AdaptResult:
    """
    Adapt a copy of ``model`` to ``episode`` for ``config.epochs`` epochs.

    The input model is never modified. With zero epochs the returned model
    has exactly the input's parameter values.

    Raises:
        NumericalError: If any loss or gradient stops being finite
        ShapeError: If the model's classifier width differs from episode.way
    """
    model = model.copy()
    model.freeze_encoder(config.encoder_frozen)
    if model.num_classes != episode.way:
        raise ShapeError(f"Classifier has {model.num_classes} outputs, episode is {episode.way}-way")

    method = config.method
    scheme = WeightScheme.create(config.scheme, config.logistic_k, config.logistic_x0)
    optimizer = MomentumSGD(
        model.parameters(), lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay
    )
    # Logistic (k, x0) only receive gradient in the transductive phase
    scheme_optimizer = None
    if method.uses_dcl and scheme.is_learnable:
        scheme_optimizer = MomentumSGD(
            scheme.parameters(),
            lr=config.lr,
            momentum=config.momentum,
            weight_decay=config.weight_decay,
        )
    schedule = LambdaNSchedule(max(config.epochs, 1))

    logger.debug(
        f"Adapting {episode.way}-way {episode.shot}-shot episode: method={method.value}, "
        f"H={config.epochs}, scheme={scheme.variant.value}"
    )

    trajectory: List[EpochRecord] = []
    for epoch in range(config.epochs):
        try:
            record = _support_step(model, episode, config, epoch, optimizer)
            if method.has_transductive_phase:
                record.update(
                    _transductive_step(
                        model, episode, config, epoch, schedule, scheme, optimizer, scheme_optimizer
                    )
                )
        except NumericalError as e:
            logger.error(f"Adaptation diverged at epoch {epoch}: {e}")
            raise NumericalError(f"Adaptation diverged at epoch {epoch}: {e}") from e

        if scheme.is_learnable and method.uses_dcl:
            record.update(logistic_k=_scalar(scheme.k), logistic_x0=_scalar(scheme.x0))
        trajectory.append(EpochRecord(epoch=epoch, **record))

    return AdaptResult(model=model, scheme=scheme, trajectory=trajectory)
