"""
Shared fixtures.

Slow tests (hundreds of paired episodes) are skipped unless IMDCL_RUN_SLOW=1.
"""

import os

import numpy as np
import pytest

from src.data.domain import DomainConfig, DomainPair, make_domain_pair
from src.data.episode import Episode, sample_episode
from src.model.network import ModelDims, SourceModel, init_model
from src.pipeline.runner import PreparedRun, prepare_run
from src.pipeline.schemas import (
    AdaptConfig,
    EpisodeConfig,
    ExperimentConfig,
    ModelConfig,
    PretrainConfig,
    RunConfig,
)

TINY_CONFIG_TEXT = """\
# Small enough for a CLI round trip in a unit test
[domain]
input_dim = 6
source_classes = 4
target_classes = 4
source_samples_per_class = 20
target_samples_per_class = 8

[episode]
way = 3
shot = 1
queries = 3

[model]
hidden_dims = 8
feature_dim = 6

[pretrain]
pretrain_epochs = 3
pretrain_batch_size = 16

[adapt]
epochs = 2

[run]
episodes = 2
seed = 3
"""


def pytest_collection_modifyitems(config, items):
    if os.environ.get("IMDCL_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="statistical run; set IMDCL_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_config() -> ExperimentConfig:
    return ExperimentConfig(
        domain=DomainConfig(
            input_dim=8,
            source_classes=6,
            target_classes=5,
            source_samples_per_class=30,
            target_samples_per_class=12,
        ),
        episode=EpisodeConfig(way=3, shot=1, queries=4),
        model=ModelConfig(hidden_dims=[16], feature_dim=8),
        pretrain=PretrainConfig(pretrain_epochs=5, pretrain_batch_size=32),
        adapt=AdaptConfig(epochs=3),
        run=RunConfig(episodes=2, seed=7),
    )


@pytest.fixture(scope="session")
def small_prepared(small_config: ExperimentConfig) -> PreparedRun:
    return prepare_run(small_config)


@pytest.fixture(scope="session")
def small_pair(small_config: ExperimentConfig) -> DomainPair:
    return make_domain_pair(small_config.domain, seed=11)


@pytest.fixture
def small_episode(small_pair: DomainPair) -> Episode:
    return sample_episode(small_pair.target, way=3, shot=1, queries=4, seed=5)


@pytest.fixture
def episode_model(small_pair: DomainPair) -> SourceModel:
    """Randomly initialized 3-way model matching small_pair's input width."""
    dims = ModelDims(input_dim=8, hidden_dims=[16], feature_dim=8, num_classes=3)
    return init_model(seed=21, dims=dims)


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG_TEXT, encoding="utf-8")
    return path
