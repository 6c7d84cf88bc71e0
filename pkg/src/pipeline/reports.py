"""
Report writers.

- report.json:      full RunReport or ComparisonTable (includes wall time)
- report.csv:       deterministic per-episode or per-row table (no timing)
- trajectory.jsonl: one EpochRecord per line, in episode then epoch order
"""

import csv
import json
from pathlib import Path
from typing import IO, Optional, Union

from loguru import logger

from src.pipeline.schemas import ComparisonTable, EpochRecord, RunReport

Report = Union[RunReport, ComparisonTable]


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def write_report_json(report: Report, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.model_dump(mode="json"), indent=2), encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_report_csv(report: Report, path: Union[str, Path]) -> Path:
    """
    CSV without timing fields, byte-identical across reruns with the same seed.

    RunReport columns: episode,seed,accuracy (then a mean and a ci95 row).
    ComparisonTable columns: label,mean_accuracy,ci95,delta_vs_first.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        if isinstance(report, RunReport):
            writer.writerow(["episode", "seed", "accuracy"])
            for i, (seed, acc) in enumerate(zip(report.episode_seeds, report.accuracies)):
                writer.writerow([i, seed, _fmt(acc)])
            writer.writerow(["mean", "", _fmt(report.mean_accuracy)])
            writer.writerow(["ci95", "", _fmt(report.ci95)])
        else:
            writer.writerow(["label", "mean_accuracy", "ci95", "delta_vs_first"])
            for row in report.rows:
                writer.writerow(
                    [row.label, _fmt(row.mean_accuracy), _fmt(row.ci95), _fmt(row.delta_vs_first)]
                )
    logger.info(f"Wrote {path}")
    return path


class TrajectoryWriter:
    """
    Append-only JSONL sink for EpochRecords.

    Example:
        with TrajectoryWriter(out / "trajectory.jsonl") as sink:
            run_experiment(config, trajectory=sink)
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._file: Optional[IO[str]] = None
        self.count = 0

    def __enter__(self) -> "TrajectoryWriter":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = self.path.open("w", encoding="utf-8")
        return self

    def __exit__(self, *exc: object) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None
        logger.info(f"Wrote {self.count} trajectory records to {self.path}")

    def write(self, record: EpochRecord) -> None:
        if self._file is None:
            raise RuntimeError("TrajectoryWriter used outside its context")
        self._file.write(record.model_dump_json() + "\n")
        self.count += 1


def format_table(table: ComparisonTable) -> str:
    """Plain-text table for stdout, accuracies in percent."""
    width = max([len(row.label) for row in table.rows] + [len("method")])
    lines = [table.title, f"{'method':<{width}}  {'acc %':>7}  {'±ci95':>6}  {'Δ first':>8}"]
    for row in table.rows:
        lines.append(
            f"{row.label:<{width}}  {100 * row.mean_accuracy:7.2f}  "
            f"{100 * row.ci95:6.2f}  {100 * row.delta_vs_first:+8.2f}"
        )
    if table.domain_gap is not None:
        lines.append(f"domain gap: {100 * table.domain_gap:.2f} pts")
    return "\n".join(lines)
