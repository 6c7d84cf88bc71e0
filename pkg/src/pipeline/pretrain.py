"""
Supervised source pretraining.

Fits encoder + classifier on the labeled source domain with mini-batch
momentum SGD and cross-entropy. The resulting model is the only thing the
adaptation stage ever sees of the source domain.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger

from src.data.domain import LabeledDataset, validate_source
from src.losses.im import ce_loss
from src.model.network import ModelDims, SourceModel, forward_logits, init_model
from src.model.optimizer import MomentumSGD
from src.numerics.autodiff import backward
from src.pipeline.schemas import ModelConfig, PretrainConfig
from src.utils.errors import NumericalError
from src.utils.seeding import derive_seed, make_rng


@dataclass
class PretrainResult:
    model: SourceModel
    train_accuracy: float
    final_loss: float
    class_ids: np.ndarray


def pretrain_source(
    dataset: LabeledDataset,
    model_config: ModelConfig,
    seed: int,
    pretrain_config: Optional[PretrainConfig] = None,
) -> PretrainResult:
    """
    Train a SourceModel on the source dataset.

    Domain-global labels are mapped to 0..C-1 in ascending id order; the
    mapping is returned as ``class_ids``.

    Raises:
        ContractError: If the dataset is empty or has fewer than 2 classes
        NumericalError: If a batch loss stops being finite
    """
    validate_source(dataset)
    cfg = pretrain_config or PretrainConfig()

    class_ids, labels = np.unique(dataset.y, return_inverse=True)
    dims = ModelDims(
        input_dim=dataset.input_dim,
        hidden_dims=list(model_config.hidden_dims),
        feature_dim=model_config.feature_dim,
        num_classes=int(class_ids.size),
    )
    model = init_model(derive_seed(seed, "pretrain", "init"), dims)
    optimizer = MomentumSGD(
        model.parameters(),
        lr=cfg.pretrain_lr,
        momentum=cfg.pretrain_momentum,
        weight_decay=cfg.pretrain_weight_decay,
    )
    batch_rng = make_rng(seed, "pretrain", "batches")

    logger.info(
        f"Pretraining on {len(dataset)} rows, {class_ids.size} classes, "
        f"{cfg.pretrain_epochs} epochs"
    )

    n = len(dataset)
    final_loss = float("nan")
    for epoch in range(cfg.pretrain_epochs):
        order = batch_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.pretrain_batch_size):
            idx = order[start : start + cfg.pretrain_batch_size]
            try:
                loss = ce_loss(forward_logits(model, dataset.x[idx]), labels[idx])
                optimizer.zero_grad()
                backward(loss)
                optimizer.step()
            except NumericalError as e:
                logger.error(f"Pretraining diverged at epoch {epoch}: {e}")
                raise NumericalError(f"Pretraining diverged at epoch {epoch}: {e}") from e
            epoch_loss += float(loss.value[0, 0]) * idx.size
        final_loss = epoch_loss / n
        logger.debug(f"Pretrain epoch {epoch}: loss={final_loss:.4f}")

    predicted = np.argmax(forward_logits(model, dataset.x).value, axis=1)
    train_accuracy = float(np.mean(predicted == labels))
    logger.success(f"Pretraining done: loss={final_loss:.4f}, train acc={train_accuracy:.3f}")

    return PretrainResult(
        model=model, train_accuracy=train_accuracy, final_loss=final_loss, class_ids=class_ids
    )
