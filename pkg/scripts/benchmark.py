"""
Performance Benchmark Script for IM-DCL.

Measures per-episode adaptation wall time for each method:
- FineTune / SIM (support phase only)
- IM (support + transductive IM)
- IM_DCL_Unweighted / IM_DCL (memory bank refresh + contrastive loss)

Usage:
    python scripts/benchmark.py --iterations 5 --config configs/near.cfg
"""

import argparse
import statistics
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent))

from loguru import logger  # noqa: E402

from src.cli.config_file import load_config  # noqa: E402
from src.data.episode import sample_episode  # noqa: E402
from src.pipeline.adapt import adapt_episode, prepare_episode_model  # noqa: E402
from src.pipeline.runner import PreparedRun, episode_seed, prepare_run  # noqa: E402
from src.pipeline.schemas import ABLATION_METHODS, ExperimentConfig, Method  # noqa: E402
from src.utils.logger import setup_logger  # noqa: E402


def benchmark_method(
    config: ExperimentConfig, prepared: PreparedRun, method: Method, iterations: int
) -> Dict[str, object]:
    """Time adapt_episode for one method over ``iterations`` episodes."""
    logger.info(f"Benchmarking {method.value}...")
    adapt_config = config.adapt.model_copy(update={"method": method})
    ep = config.episode

    times: List[float] = []
    for i in range(iterations):
        seed = episode_seed(config.run.seed, i)
        episode = sample_episode(prepared.target, ep.way, ep.shot, ep.queries, seed)
        model = prepare_episode_model(prepared.source_model, ep.way, seed)
        start = time.perf_counter()
        adapt_episode(model, episode, adapt_config)
        times.append(time.perf_counter() - start)

    return {
        "component": method.value,
        "mean_ms": round(statistics.mean(times) * 1000, 2),
        "std_ms": round(statistics.stdev(times) * 1000, 2) if len(times) > 1 else 0,
        "min_ms": round(min(times) * 1000, 2),
        "max_ms": round(max(times) * 1000, 2),
    }


def run_benchmark(config: ExperimentConfig, iterations: int) -> List[Dict[str, object]]:
    """Run all benchmarks."""
    logger.info("=" * 60)
    logger.info("IM-DCL — Adaptation Benchmark")
    logger.info("=" * 60)

    prepared = prepare_run(config)
    results = [benchmark_method(config, prepared, m, iterations) for m in ABLATION_METHODS]

    print("\n" + "=" * 60)
    print("BENCHMARK RESULTS (per episode)")
    print("=" * 60)
    print(f"{'Method':<20} {'Mean (ms)':<12} {'Std (ms)':<10} {'Min':<10} {'Max':<10}")
    print("-" * 60)
    for r in results:
        print(
            f"{r['component']:<20} "
            f"{r['mean_ms']:<12} "
            f"{r['std_ms']:<10} "
            f"{r['min_ms']:<10} "
            f"{r['max_ms']:<10}"
        )
    print("=" * 60)
    return results


def parse_args() -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(description="Benchmark IM-DCL adaptation speed")
    parser.add_argument(
        "--iterations",
        type=int,
        default=5,
        help="Episodes per method (default: 5)",
    )
    parser.add_argument("--config", type=Path, help="Run configuration file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE"
    )
    return parser.parse_args()


def main() -> int:
    """Main entry point."""
    args = parse_args()

    # Setup logging
    setup_logger(level="INFO")

    config_path: Optional[Path] = args.config
    try:
        config = load_config(config_path, args.overrides)
        run_benchmark(config, args.iterations)
        return 0
    except Exception as e:
        logger.error(f"Benchmark failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
