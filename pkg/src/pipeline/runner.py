"""
Experiment runners.

run_experiment evaluates one configuration over E episodes. The comparison
runners (ablation and the lambda_N, sigma, scheme, top-k and IM-term studies)
reuse one pretrained source model and one list of episode seeds, so every
configuration sees exactly the same episodes and classifier initializations.
The domain-gap study runs one configuration on two target domains.
"""

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src import __version__
from src.cli.config_file import config_hash
from src.data.domain import DomainConfig, DomainSpec, make_domain_pair
from src.data.episode import sample_episode
from src.dcl.loss import DclMode
from src.dcl.schedule import LambdaNMode
from src.dcl.weights import SchemeVariant
from src.model.network import SourceModel
from src.pipeline.adapt import adapt_episode, prepare_episode_model
from src.pipeline.evaluate import domain_gap, evaluate
from src.pipeline.pretrain import pretrain_source
from src.pipeline.reports import TrajectoryWriter
from src.pipeline.schemas import (
    ABLATION_METHODS,
    DISTANT_SEVERITY,
    SIGMA_GRID,
    TOP_K_GRID,
    ComparisonRow,
    ComparisonTable,
    EpisodeResult,
    EpochRecord,
    ExperimentConfig,
    Method,
    RunReport,
)
from src.utils.errors import ContractError
from src.utils.seeding import derive_seed

CI_Z = 1.96


@dataclass
class PreparedRun:
    """Target domain and pretrained source model shared by paired runs."""

    target: DomainSpec
    source_model: SourceModel
    source_train_accuracy: Optional[float] = None


def prepare_run(config: ExperimentConfig) -> PreparedRun:
    """Generate the domain pair and pretrain the source model."""
    seed = config.run.seed
    pair = make_domain_pair(config.domain, derive_seed(seed, "domain"))
    result = pretrain_source(
        pair.source.data, config.model, derive_seed(seed, "pretrain"), config.pretrain
    )
    # Source data is dropped here; adaptation only sees the model
    return PreparedRun(
        target=pair.target,
        source_model=result.model,
        source_train_accuracy=result.train_accuracy,
    )


def confidence_interval(accuracies: Sequence[float]) -> float:
    """1.96 * population std / sqrt(E)."""
    values = np.asarray(accuracies, dtype=np.float64)
    if values.size == 0:
        raise ContractError("Confidence interval needs at least one accuracy")
    return float(CI_Z * values.std() / math.sqrt(values.size))


def episode_seed(run_seed: int, index: int) -> int:
    return derive_seed(run_seed, "episode", index)


def run_episode(
    index: int,
    seed: int,
    target: DomainSpec,
    source_model: SourceModel,
    config: ExperimentConfig,
) -> Tuple[EpisodeResult, List[EpochRecord]]:
    """Sample, adapt and evaluate one episode."""
    ep = config.episode
    episode = sample_episode(target, ep.way, ep.shot, ep.queries, seed)
    adapt_config = config.adapt.model_copy(update={"seed": derive_seed(seed, "adapt")})
    model = prepare_episode_model(source_model, ep.way, seed, adapt_config.encoder_frozen)
    result = adapt_episode(model, episode, adapt_config)
    accuracy = evaluate(result.model, episode)
    records = [r.model_copy(update={"episode": index}) for r in result.trajectory]
    logger.debug(f"Episode {index}: acc={accuracy:.3f}")
    return EpisodeResult(episode=index, seed=seed, accuracy=accuracy), records


def _episode_job(
    args: Tuple[int, int, DomainSpec, SourceModel, ExperimentConfig]
) -> Tuple[EpisodeResult, List[EpochRecord]]:
    return run_episode(*args)


def run_experiment(
    config: ExperimentConfig,
    episodes: Optional[int] = None,
    prepared: Optional[PreparedRun] = None,
    trajectory: Optional[TrajectoryWriter] = None,
) -> RunReport:
    """
    Evaluate ``config.adapt.method`` over E episodes.

    Args:
        config: Fully resolved configuration
        episodes: E (defaults to config.run.episodes)
        prepared: Shared domain and source model; built from config if None
        trajectory: Optional JSONL sink for per-epoch records

    Returns:
        RunReport with per-episode accuracies, mean and 95% CI
    """
    num_episodes = config.run.episodes if episodes is None else episodes
    if num_episodes < 1:
        raise ContractError(f"Need at least one episode, got {num_episodes}")
    prepared = prepared or prepare_run(config)

    seeds = [episode_seed(config.run.seed, i) for i in range(num_episodes)]
    jobs = [(i, s, prepared.target, prepared.source_model, config) for i, s in enumerate(seeds)]

    start = time.perf_counter()
    if config.run.jobs > 1 and num_episodes > 1:
        # map() yields in submission order, so results line up with episode indices
        with ProcessPoolExecutor(max_workers=config.run.jobs) as pool:
            outcomes = list(pool.map(_episode_job, jobs))
    else:
        outcomes = [_episode_job(job) for job in jobs]
    wall_time = time.perf_counter() - start

    accuracies = [result.accuracy for result, _ in outcomes]
    if trajectory is not None:
        for _, records in outcomes:
            for record in records:
                trajectory.write(record)

    report = RunReport(
        method=config.adapt.method,
        accuracies=accuracies,
        episode_seeds=seeds,
        mean_accuracy=float(np.mean(accuracies)),
        ci95=confidence_interval(accuracies),
        episodes=num_episodes,
        config=config.model_dump(mode="json"),
        config_hash=config_hash(config),
        version=__version__,
        source_train_accuracy=prepared.source_train_accuracy,
        wall_time_s=wall_time,
    )
    logger.info(f"{report.summary()} over {num_episodes} episodes ({wall_time:.1f}s)")
    return report


def _table(title: str, labels: Sequence[str], reports: Sequence[RunReport]) -> ComparisonTable:
    first = reports[0].mean_accuracy
    rows = [
        ComparisonRow(
            label=label,
            mean_accuracy=report.mean_accuracy,
            ci95=report.ci95,
            delta_vs_first=report.mean_accuracy - first,
        )
        for label, report in zip(labels, reports)
    ]
    pairwise = {
        f"{b} - {a}": rb.mean_accuracy - ra.mean_accuracy
        for (a, ra), (b, rb) in itertools.combinations(zip(labels, reports), 2)
    }
    return ComparisonTable(title=title, rows=rows, pairwise_deltas=pairwise, reports=list(reports))


def _compare(
    title: str,
    base: ExperimentConfig,
    variants: Sequence[Tuple[str, Callable[[ExperimentConfig], ExperimentConfig]]],
    episodes: Optional[int],
    prepared: Optional[PreparedRun],
) -> ComparisonTable:
    prepared = prepared or prepare_run(base)
    reports: List[RunReport] = []
    labels: List[str] = []
    for label, derive in variants:
        logger.info(f"{title}: running {label}")
        reports.append(run_experiment(derive(base), episodes, prepared))
        labels.append(label)
    return _table(title, labels, reports)


def run_ablation(
    base: ExperimentConfig,
    methods: Sequence[Method] = tuple(ABLATION_METHODS),
    episodes: Optional[int] = None,
    prepared: Optional[PreparedRun] = None,
) -> ComparisonTable:
    """One row per method, paired over identical episodes."""
    if not methods:
        raise ContractError("Ablation needs at least one method")
    variants = [
        (Method(m).value, lambda cfg, m=Method(m): cfg.with_adapt(method=m)) for m in methods
    ]
    return _compare("Ablation", base, variants, episodes, prepared)


def run_lambda_study(
    base: ExperimentConfig,
    modes: Sequence[LambdaNMode] = (
        LambdaNMode.FIXED_MIN,
        LambdaNMode.FIXED_MAX,
        LambdaNMode.VARIABLE,
    ),
    episodes: Optional[int] = None,
    prepared: Optional[PreparedRun] = None,
) -> ComparisonTable:
    """IM+DCL under each lambda_N mode."""
    if not modes:
        raise ContractError("Lambda study needs at least one mode")
    variants = [
        (
            LambdaNMode(mode).value,
            lambda cfg, mode=LambdaNMode(mode): cfg.with_adapt(
                method=Method.IM_DCL, lambda_n_mode=mode
            ),
        )
        for mode in modes
    ]
    return _compare("lambda_N study", base, variants, episodes, prepared)


def run_sigma_study(
    base: ExperimentConfig,
    sigmas: Sequence[float] = tuple(SIGMA_GRID),
    episodes: Optional[int] = None,
    prepared: Optional[PreparedRun] = None,
) -> ComparisonTable:
    """IM+DCL in top-k mode for each support boost sigma."""
    if not sigmas:
        raise ContractError("Sigma study needs at least one sigma")
    variants = [
        (
            f"sigma={float(sigma):g}",
            lambda cfg, sigma=float(sigma): cfg.with_adapt(
                method=Method.IM_DCL, dcl_mode=DclMode.TOPK, sigma=sigma
            ),
        )
        for sigma in sigmas
    ]
    return _compare("sigma study", base, variants, episodes, prepared)


def run_scheme_study(
    base: ExperimentConfig,
    schemes: Sequence[SchemeVariant] = tuple(SchemeVariant),
    episodes: Optional[int] = None,
    prepared: Optional[PreparedRun] = None,
) -> ComparisonTable:
    """IM+DCL under each negative-weight inversion."""
    if not schemes:
        raise ContractError("Scheme study needs at least one scheme")
    variants = [
        (
            SchemeVariant(scheme).value,
            lambda cfg, scheme=SchemeVariant(scheme): cfg.with_adapt(
                method=Method.IM_DCL, scheme=scheme
            ),
        )
        for scheme in schemes
    ]
    return _compare("negative-weight scheme study", base, variants, episodes, prepared)


def run_top_k_study(
    base: ExperimentConfig,
    sizes: Sequence[int] = tuple(TOP_K_GRID),
    episodes: Optional[int] = None,
    prepared: Optional[PreparedRun] = None,
) -> ComparisonTable:
    """IM+DCL in top-k mode for each positive-set size."""
    if not sizes:
        raise ContractError("Top-k study needs at least one size")
    variants = [
        (
            f"top_k={int(k)}",
            lambda cfg, k=int(k): cfg.with_adapt(
                method=Method.IM_DCL, dcl_mode=DclMode.TOPK, top_k=k
            ),
        )
        for k in sizes
    ]
    return _compare("top-k size study", base, variants, episodes, prepared)


def run_im_terms_study(
    base: ExperimentConfig,
    episodes: Optional[int] = None,
    prepared: Optional[PreparedRun] = None,
) -> ComparisonTable:
    """IM with only one of its two terms, against full IM."""
    variants = [
        ("IM w/o certainty", lambda cfg: cfg.with_adapt(method=Method.IM, lambda_cer=0.0)),
        ("IM w/o diversity", lambda cfg: cfg.with_adapt(method=Method.IM, lambda_div=0.0)),
        ("IM", lambda cfg: cfg.with_adapt(method=Method.IM)),
    ]
    return _compare("IM term study", base, variants, episodes, prepared)


def distant_variant(config: ExperimentConfig) -> ExperimentConfig:
    """``config`` with the target shift raised to the distant regime."""
    domain = DomainConfig.model_validate(
        {**config.domain.model_dump(), "shift_severity": DISTANT_SEVERITY}
    )
    return config.model_copy(update={"domain": domain})


def run_domain_gap_study(
    near: ExperimentConfig,
    distant: Optional[ExperimentConfig] = None,
    episodes: Optional[int] = None,
) -> ComparisonTable:
    """
    Run one configuration on a near and a distant target domain.

    Each regime pretrains on its own domain pair; both use the same episode
    seeds. The table's ``domain_gap`` is the absolute difference of the two
    mean accuracies (lower means more even handling of both shifts).
    """
    distant = distant or distant_variant(near)
    labels = [
        f"near (severity={near.domain.shift_severity:g})",
        f"distant (severity={distant.domain.shift_severity:g})",
    ]
    reports = []
    for label, config in zip(labels, (near, distant)):
        logger.info(f"domain gap study: running {label}")
        reports.append(run_experiment(config, episodes))

    table = _table("domain gap study", labels, reports)
    table.domain_gap = domain_gap(reports[0].mean_accuracy, reports[1].mean_accuracy)
    logger.info(f"Domain gap: {100 * table.domain_gap:.2f} pts")
    return table
