"""Experiment runners, paired comparisons and report files."""

import gc
import inspect
import json
import math
import weakref

import numpy as np
import pytest

from src import __version__
from src.data.domain import make_domain_pair
from src.data.episode import sample_episode
from src.dcl.schedule import LambdaNMode
from src.dcl.weights import SchemeVariant
from src.pipeline.adapt import adapt_episode, prepare_episode_model
from src.pipeline.evaluate import evaluate
from src.pipeline.pretrain import pretrain_source
from src.pipeline.reports import (
    TrajectoryWriter,
    format_table,
    write_report_csv,
    write_report_json,
)
from src.pipeline.runner import (
    PreparedRun,
    confidence_interval,
    distant_variant,
    episode_seed,
    run_ablation,
    run_domain_gap_study,
    run_experiment,
    run_im_terms_study,
    run_lambda_study,
    run_scheme_study,
    run_sigma_study,
    run_top_k_study,
)
from src.pipeline.schemas import (
    ABLATION_METHODS,
    DISTANT_SEVERITY,
    TOP_K_GRID,
    ComparisonTable,
    Method,
    RunConfig,
    RunReport,
)
from src.utils.errors import ContractError
from src.utils.seeding import derive_seed


class TestConfidenceInterval:
    def test_single_episode_is_zero(self):
        assert confidence_interval([0.4]) == 0.0

    def test_population_std(self):
        values = [0.2, 0.4, 0.6, 0.8]
        expected = 1.96 * np.std(values) / math.sqrt(4)
        assert confidence_interval(values) == pytest.approx(expected)

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            confidence_interval([])


class TestRunExperiment:
    def test_report_fields(self, small_config, small_prepared):
        report = run_experiment(small_config, prepared=small_prepared)
        assert report.episodes == 2
        assert len(report.accuracies) == 2
        assert report.episode_seeds == [episode_seed(7, 0), episode_seed(7, 1)]
        assert report.mean_accuracy == pytest.approx(np.mean(report.accuracies))
        assert report.method is Method.IM_DCL
        assert report.version == __version__
        assert report.config["run"]["seed"] == 7

    def test_same_seed_same_report(self, small_config, small_prepared):
        a = run_experiment(small_config, prepared=small_prepared)
        b = run_experiment(small_config, prepared=small_prepared)
        assert a.accuracies == b.accuracies
        assert a.config_hash == b.config_hash

    def test_single_episode_zero_ci(self, small_config, small_prepared):
        report = run_experiment(small_config, episodes=1, prepared=small_prepared)
        assert report.ci95 == 0.0

    def test_zero_episodes_rejected(self, small_config, small_prepared):
        with pytest.raises(ContractError):
            run_experiment(small_config, episodes=0, prepared=small_prepared)

    def test_parallel_matches_serial(self, small_config, small_prepared):
        serial = run_experiment(small_config, prepared=small_prepared)
        parallel_config = small_config.model_copy(
            update={"run": RunConfig(episodes=2, seed=7, jobs=2)}
        )
        parallel = run_experiment(parallel_config, prepared=small_prepared)
        assert parallel.accuracies == serial.accuracies

    def test_builds_its_own_source_model(self, small_config, small_prepared):
        # prepare_run is deterministic, so a fresh build gives the shared result
        fresh = run_experiment(small_config, episodes=1)
        shared = run_experiment(small_config, episodes=1, prepared=small_prepared)
        assert fresh.accuracies == shared.accuracies
        assert fresh.source_train_accuracy == shared.source_train_accuracy

    def test_adapts_after_source_data_is_deleted(self, small_config):
        assert list(inspect.signature(adapt_episode).parameters) == ["model", "episode", "config"]

        pair = make_domain_pair(small_config.domain, derive_seed(7, "domain"))
        target = pair.target
        source_data = pair.source.data
        pretrained = pretrain_source(source_data, small_config.model, 3, small_config.pretrain)
        source_ref = weakref.ref(source_data)
        del pair, source_data
        gc.collect()
        assert source_ref() is None

        episode = sample_episode(target, way=3, shot=1, queries=4, seed=5)
        model = prepare_episode_model(pretrained.model, way=3, seed=5)
        adapted = adapt_episode(model, episode, small_config.adapt)
        assert 0.0 <= evaluate(adapted.model, episode) <= 1.0

        prepared = PreparedRun(target=target, source_model=pretrained.model)
        report = run_experiment(small_config, prepared=prepared)
        assert report.episodes == 2

    def test_trajectory_lines(self, small_config, small_prepared, tmp_path):
        path = tmp_path / "trajectory.jsonl"
        with TrajectoryWriter(path) as sink:
            run_experiment(small_config, prepared=small_prepared, trajectory=sink)
        lines = path.read_text(encoding="utf-8").splitlines()
        episodes, epochs = small_config.run.episodes, small_config.adapt.epochs
        assert sink.count == len(lines) == episodes * epochs
        records = [json.loads(line) for line in lines]
        assert [r["episode"] for r in records] == [0] * epochs + [1] * epochs
        assert [r["epoch"] for r in records[:epochs]] == list(range(epochs))


class TestComparisons:
    def test_single_method_ablation_matches_run(self, small_config, small_prepared):
        table = run_ablation(small_config, methods=[Method.IM], prepared=small_prepared)
        direct = run_experiment(small_config.with_adapt(method=Method.IM), prepared=small_prepared)
        assert table.reports[0].accuracies == direct.accuracies
        assert table.rows[0].delta_vs_first == 0.0
        assert table.pairwise_deltas == {}

    def test_full_ablation_shape(self, small_config, small_prepared):
        table = run_ablation(small_config, prepared=small_prepared)
        assert [row.label for row in table.rows] == [m.value for m in ABLATION_METHODS]
        assert len(table.pairwise_deltas) == 10
        first = table.rows[0].mean_accuracy
        for row in table.rows:
            assert row.delta_vs_first == pytest.approx(row.mean_accuracy - first)
        # every method is evaluated on the same episodes
        seeds = {tuple(r.episode_seeds) for r in table.reports}
        assert len(seeds) == 1

    def test_ablation_pairwise_keys(self, small_config, small_prepared):
        table = run_ablation(
            small_config, methods=[Method.SIM, Method.IM_DCL], prepared=small_prepared
        )
        delta = table.rows[1].mean_accuracy - table.rows[0].mean_accuracy
        assert table.pairwise_deltas == {"IM_DCL - SIM": pytest.approx(delta)}

    def test_zero_dcl_weight_pairs_with_im(self, small_config, small_prepared):
        base = small_config.with_adapt(lambda_dcl=0.0)
        table = run_ablation(base, methods=[Method.IM, Method.IM_DCL], prepared=small_prepared)
        assert table.reports[0].accuracies == table.reports[1].accuracies

    def test_empty_method_list_rejected(self, small_config, small_prepared):
        with pytest.raises(ContractError):
            run_ablation(small_config, methods=[], prepared=small_prepared)

    def test_lambda_study_labels(self, small_config, small_prepared):
        table = run_lambda_study(small_config, prepared=small_prepared)
        assert [row.label for row in table.rows] == ["FixedMin", "FixedMax", "Variable"]
        assert all(r.method is Method.IM_DCL for r in table.reports)
        modes = [r.config["adapt"]["lambda_n_mode"] for r in table.reports]
        expected = (LambdaNMode.FIXED_MIN, LambdaNMode.FIXED_MAX, LambdaNMode.VARIABLE)
        assert modes == [m.value for m in expected]

    def test_sigma_study_labels(self, small_config, small_prepared):
        table = run_sigma_study(small_config, sigmas=[1.0, 2.5], prepared=small_prepared)
        assert [row.label for row in table.rows] == ["sigma=1", "sigma=2.5"]
        assert [r.config["adapt"]["dcl_mode"] for r in table.reports] == ["TopK", "TopK"]

    def test_scheme_study_covers_every_scheme(self, small_config, small_prepared):
        table = run_scheme_study(small_config, prepared=small_prepared)
        assert [row.label for row in table.rows] == [
            "ReverseOrder",
            "Opposite",
            "NonlinearLogistic",
        ]
        assert [r.config["adapt"]["scheme"] for r in table.reports] == [
            row.label for row in table.rows
        ]
        assert len(table.pairwise_deltas) == 3

    def test_scheme_study_row_matches_direct_run(self, small_config, small_prepared):
        table = run_scheme_study(
            small_config, schemes=[SchemeVariant.OPPOSITE], prepared=small_prepared
        )
        direct = run_experiment(
            small_config.with_adapt(method=Method.IM_DCL, scheme=SchemeVariant.OPPOSITE),
            prepared=small_prepared,
        )
        assert table.reports[0].accuracies == direct.accuracies

    def test_top_k_study_sizes(self, small_config, small_prepared):
        table = run_top_k_study(small_config, sizes=[1, 3], prepared=small_prepared)
        assert [row.label for row in table.rows] == ["top_k=1", "top_k=3"]
        assert [r.config["adapt"]["top_k"] for r in table.reports] == [1, 3]
        assert {r.config["adapt"]["dcl_mode"] for r in table.reports} == {"TopK"}

    def test_top_k_grid_spans_one_to_ten(self):
        assert TOP_K_GRID == list(range(1, 11))

    def test_empty_study_grids_rejected(self, small_config, small_prepared):
        with pytest.raises(ContractError):
            run_scheme_study(small_config, schemes=[], prepared=small_prepared)
        with pytest.raises(ContractError):
            run_top_k_study(small_config, sizes=[], prepared=small_prepared)

    def test_im_terms_study(self, small_config, small_prepared):
        table = run_im_terms_study(small_config, prepared=small_prepared)
        assert [row.label for row in table.rows] == ["IM w/o certainty", "IM w/o diversity", "IM"]
        assert all(r.method is Method.IM for r in table.reports)
        adapt = [r.config["adapt"] for r in table.reports]
        assert (adapt[0]["lambda_cer"], adapt[0]["lambda_div"]) == (0.0, 1.0)
        assert (adapt[1]["lambda_cer"], adapt[1]["lambda_div"]) == (1.0, 0.0)
        direct = run_experiment(small_config.with_adapt(method=Method.IM), prepared=small_prepared)
        assert table.reports[2].accuracies == direct.accuracies


class TestDomainGapStudy:
    def test_distant_variant_only_moves_severity(self, small_config):
        distant = distant_variant(small_config)
        assert distant.domain.shift_severity == DISTANT_SEVERITY
        assert distant.domain.model_dump(exclude={"shift_severity"}) == (
            small_config.domain.model_dump(exclude={"shift_severity"})
        )
        assert distant.adapt == small_config.adapt

    def test_gap_is_absolute_difference(self, small_config, tmp_path):
        table = run_domain_gap_study(small_config, episodes=1)
        near, distant = table.reports
        assert [row.label for row in table.rows] == [
            "near (severity=0.2)",
            "distant (severity=0.8)",
        ]
        assert near.episode_seeds == distant.episode_seeds
        assert table.domain_gap == pytest.approx(abs(near.mean_accuracy - distant.mean_accuracy))
        assert "domain gap" in format_table(table)
        path = write_report_json(table, tmp_path / "report.json")
        loaded = ComparisonTable.model_validate_json(path.read_text(encoding="utf-8"))
        assert loaded.domain_gap == table.domain_gap

    def test_explicit_distant_config(self, small_config):
        distant = distant_variant(small_config).with_adapt(method=Method.IM)
        table = run_domain_gap_study(small_config, distant, episodes=1)
        assert table.reports[1].method is Method.IM


class TestReportFiles:
    def test_run_report_csv(self, small_config, small_prepared, tmp_path):
        report = run_experiment(small_config, prepared=small_prepared)
        path = write_report_csv(report, tmp_path / "report.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "episode,seed,accuracy"
        assert len(lines) == 1 + report.episodes + 2
        assert lines[-2].startswith("mean,")
        assert lines[-1].startswith("ci95,")

    def test_csv_is_byte_identical_across_runs(self, small_config, small_prepared, tmp_path):
        a = run_ablation(small_config, methods=[Method.SIM, Method.IM], prepared=small_prepared)
        b = run_ablation(small_config, methods=[Method.SIM, Method.IM], prepared=small_prepared)
        pa = write_report_csv(a, tmp_path / "a.csv")
        pb = write_report_csv(b, tmp_path / "b.csv")
        assert pa.read_bytes() == pb.read_bytes()
        assert pa.read_text(encoding="utf-8").splitlines()[0] == (
            "label,mean_accuracy,ci95,delta_vs_first"
        )

    def test_json_round_trip(self, small_config, small_prepared, tmp_path):
        report = run_experiment(small_config, prepared=small_prepared)
        path = write_report_json(report, tmp_path / "report.json")
        loaded = RunReport.model_validate_json(path.read_text(encoding="utf-8"))
        assert loaded.accuracies == report.accuracies
        assert loaded.config_hash == report.config_hash

    def test_format_table(self, small_config, small_prepared):
        table = run_ablation(small_config, methods=[Method.SIM, Method.IM], prepared=small_prepared)
        text = format_table(table)
        assert "SIM" in text and "IM" in text
