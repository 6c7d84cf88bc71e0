"""
imdcl command line.

Usage:
    python -m src.cli adapt --config configs/near.cfg --set method=IM_DCL --set episodes=100
    python -m src.cli ablate --config configs/near.cfg --jobs 4
    python -m src.cli scheme-study --config configs/near.cfg
    python -m src.cli gap-study --config configs/near.cfg --distant-config configs/distant.cfg
    python -m src.cli gradcheck

Exit codes: 0 success, 1 configuration error, 2 numerical abort (non-finite
loss), 3 gradient check above tolerance.
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from loguru import logger

from src.cli.config_file import load_config, render_config
from src.data.domain import make_domain_pair
from src.data.export import export_dataset
from src.model.checkpoint import load_checkpoint, save_checkpoint
from src.pipeline.diagnostics import GRADCHECK_TOL, failing_objectives, run_gradcheck_suite
from src.pipeline.reports import (
    TrajectoryWriter,
    format_table,
    write_report_csv,
    write_report_json,
)
from src.pipeline.runner import (
    PreparedRun,
    prepare_run,
    run_ablation,
    run_domain_gap_study,
    run_experiment,
    run_im_terms_study,
    run_lambda_study,
    run_scheme_study,
    run_sigma_study,
    run_top_k_study,
)
from src.pipeline.schemas import ComparisonTable, ExperimentConfig
from src.utils.config import get_settings
from src.utils.errors import ConfigError, ImdclError, NumericalError
from src.utils.logger import setup_logger
from src.utils.seeding import derive_seed

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_GRADCHECK = 3

# Paired comparison commands over one prepared run
STUDIES: Dict[str, Callable[..., ComparisonTable]] = {
    "ablate": run_ablation,
    "lambda-study": run_lambda_study,
    "sigma-study": run_sigma_study,
    "scheme-study": run_scheme_study,
    "topk-study": run_top_k_study,
    "im-study": run_im_terms_study,
}

COMMANDS = ("pretrain", "adapt", *STUDIES, "gap-study", "gradcheck", "export-data")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imdcl", description="Source-free few-shot adaptation with IM + DCL"
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="Run configuration file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override one config key (repeatable, applied last)",
    )
    parser.add_argument(
        "--output-dir", type=Path, help="Output directory (default: $IMDCL_OUTPUT_DIR or outputs)"
    )
    parser.add_argument("--jobs", type=int, help="Worker processes for episodes")
    parser.add_argument(
        "--checkpoint", type=Path, help="Use this pretrained source model instead of pretraining"
    )
    parser.add_argument(
        "--distant-config",
        type=Path,
        help="gap-study: distant-regime configuration (default: --config at severity 0.8)",
    )
    parser.add_argument(
        "--instances", type=int, default=20, help="Random cases per loss for gradcheck"
    )
    return parser


def _overrides(args: argparse.Namespace) -> List[str]:
    overrides: List[str] = list(args.overrides)
    if args.jobs is not None:
        overrides.append(f"jobs={args.jobs}")
    return overrides


def _prepared(config: ExperimentConfig, checkpoint: Optional[Path]) -> PreparedRun:
    if checkpoint is None:
        return prepare_run(config)
    pair = make_domain_pair(config.domain, derive_seed(config.run.seed, "domain"))
    return PreparedRun(target=pair.target, source_model=load_checkpoint(checkpoint))


def _write_table(table: ComparisonTable, out: Path) -> int:
    write_report_json(table, out / "report.json")
    write_report_csv(table, out / "report.csv")
    print(format_table(table))
    return EXIT_OK


def _run_command(args: argparse.Namespace, config: ExperimentConfig, out: Path) -> int:
    command = args.command

    if command == "gradcheck":
        results = run_gradcheck_suite(seed=config.run.seed, instances=args.instances)
        for name, err in results.items():
            print(f"{name:<28} {err:.3e}")
        failing = failing_objectives(results)
        if failing:
            logger.error(f"Gradient check above {GRADCHECK_TOL:g}: {', '.join(failing)}")
            return EXIT_GRADCHECK
        return EXIT_OK

    if command == "export-data":
        pair = make_domain_pair(config.domain, derive_seed(config.run.seed, "domain"))
        export_dataset(pair.source.data, out / "source.csv")
        export_dataset(pair.target.data, out / "target.csv")
        return EXIT_OK

    if command == "pretrain":
        prepared = prepare_run(config)
        save_checkpoint(prepared.source_model, out / "checkpoint.json")
        print(f"source train accuracy: {prepared.source_train_accuracy:.4f}")
        return EXIT_OK

    if command == "gap-study":
        distant = None
        if args.distant_config is not None:
            distant = load_config(args.distant_config, _overrides(args))
        return _write_table(run_domain_gap_study(config, distant), out)

    prepared = _prepared(config, args.checkpoint)

    if command == "adapt":
        with TrajectoryWriter(out / "trajectory.jsonl") as sink:
            report = run_experiment(config, prepared=prepared, trajectory=sink)
        write_report_json(report, out / "report.json")
        write_report_csv(report, out / "report.csv")
        print(report.summary())
        return EXIT_OK

    return _write_table(STUDIES[command](config, prepared=prepared), out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG

    settings = get_settings()
    setup_logger(
        level=settings.log_level, json_format=settings.log_json, log_dir=settings.log_dir
    )

    try:
        config = load_config(args.config, _overrides(args))
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG

    out = Path(args.output_dir or settings.output_dir)
    print(render_config(config))

    try:
        return _run_command(args, config, out)
    except NumericalError as e:
        logger.error(f"Numerical abort: {e}")
        return EXIT_NUMERICAL
    except ImdclError as e:
        logger.error(str(e))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
