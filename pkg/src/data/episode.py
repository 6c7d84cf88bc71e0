"""
N-way K-shot episode sampling.

An Episode exposes the labeled support set and the unlabeled query inputs.
Query labels are wrapped in HeldOutLabels and only read by evaluation, so no
loss computation can reach them.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.data.domain import DomainSpec
from src.numerics.matrix import Matrix
from src.utils.errors import ContractError
from src.utils.seeding import make_rng


class HeldOutLabels:
    """Query labels sealed away from adaptation; call reveal() to evaluate."""

    __slots__ = ("_labels",)

    def __init__(self, labels: np.ndarray):
        sealed = np.array(labels, dtype=np.int64)
        sealed.setflags(write=False)
        self._labels = sealed

    def reveal(self) -> np.ndarray:
        return self._labels

    def __len__(self) -> int:
        return int(self._labels.size)

    def __repr__(self) -> str:
        return f"HeldOutLabels(n={len(self)})"


@dataclass(frozen=True)
class Episode:
    """
    One target task: N·K labeled support rows and N·Q query rows.

    Support and query labels are episode-local (0..N-1); ``class_ids`` maps
    them back to the target domain's global ids.
    """

    support_x: Matrix
    support_y: np.ndarray
    query_x: Matrix
    query_y: HeldOutLabels
    way: int
    shot: int
    queries: int
    class_ids: Tuple[int, ...]
    support_ids: np.ndarray
    query_ids: np.ndarray

    @property
    def num_support(self) -> int:
        return int(self.support_x.shape[0])

    @property
    def num_query(self) -> int:
        return int(self.query_x.shape[0])

    @property
    def size(self) -> int:
        """m, the number of target rows (support first, then query)."""
        return self.num_support + self.num_query

    def all_x(self) -> Matrix:
        return np.vstack([self.support_x, self.query_x])


def sample_episode(target: DomainSpec, way: int, shot: int, queries: int, seed: int) -> Episode:
    """
    Draw an N-way K-shot episode with Q queries per class.

    Classes are sampled without replacement; rows within each class are
    disjoint between support and query; both sets are shuffled.

    Raises:
        ContractError: If the target lacks classes or samples
    """
    if way < 1 or shot < 1 or queries < 0:
        raise ContractError(f"Invalid episode shape N={way}, K={shot}, Q={queries}")
    if way > target.num_classes:
        raise ContractError(f"{way}-way episode needs {way} classes, target has {target.num_classes}")

    rng = make_rng(seed, "episode")
    data = target.data
    chosen = rng.choice(target.num_classes, size=way, replace=False)
    class_ids = tuple(int(target.class_ids[c]) for c in chosen)

    support_rows, support_y, query_rows, query_y = [], [], [], []
    for local, global_id in enumerate(class_ids):
        rows = np.flatnonzero(data.y == global_id)
        if rows.size < shot + queries:
            raise ContractError(
                f"Class {global_id} has {rows.size} samples, need {shot + queries}"
            )
        picked = rng.permutation(rows)[: shot + queries]
        support_rows.append(picked[:shot])
        query_rows.append(picked[shot:])
        support_y.append(np.full(shot, local))
        query_y.append(np.full(queries, local))

    s_rows, s_y = np.concatenate(support_rows), np.concatenate(support_y)
    q_rows, q_y = np.concatenate(query_rows), np.concatenate(query_y)
    s_order = rng.permutation(s_rows.size)
    q_order = rng.permutation(q_rows.size)

    return Episode(
        support_x=data.x[s_rows[s_order]],
        support_y=s_y[s_order].astype(np.int64),
        query_x=data.x[q_rows[q_order]],
        query_y=HeldOutLabels(q_y[q_order]),
        way=way,
        shot=shot,
        queries=queries,
        class_ids=class_ids,
        support_ids=data.ids[s_rows[s_order]],
        query_ids=data.ids[q_rows[q_order]],
    )
