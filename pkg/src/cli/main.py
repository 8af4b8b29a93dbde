# src/cli/main.py
"""
Command-line entry point.

    python -m src.cli.main <verb> --config <path> [--out <dir>] [--seed N] [--threads N]

Exit codes: 0 success, 1 configuration or input error, 2 solver non-convergence.
"""
import sys
import json
import logging
import argparse
from pathlib import Path
from typing import List, Optional

import numpy as np

from src.core.arrangements import enumerate_exact, region_count_bound
from src.core.config import load_config
from src.core.errors import ConfigError, ConvergenceError, ConvexReLUError, DatasetError, ShapeError
from src.core.experiment import ExperimentConfig, build_dataset, run_experiment, run_gauge, run_sgd_trials
from src.core.numerics import matrix_rank

logger = logging.getLogger(__name__)

VERBS = ["enumerate", "solve", "sgd", "compare", "cnn-nuclear", "cnn-circular", "gauge"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Exact convex training of two-layer ReLU networks")
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", type=str, default=None, help="Experiment YAML file")
    parser.add_argument("--out", type=str, default=None, help="Output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, default=None, help="Seed override")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for SGD trials")
    return parser


def _write(out: Path, name: str, payload: dict):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w") as f:
        json.dump(payload, f, indent=2)


def _enumerate(cfg: ExperimentConfig) -> int:
    X, _, _ = build_dataset(cfg.dataset, cfg.seed)
    patterns = enumerate_exact(X, cfg.margin_scale)
    rank = matrix_rank(X)
    bound = region_count_bound(X.shape[0], rank)
    summary = {"n": X.shape[0], "rank": rank, "count": len(patterns), "bound": bound}
    _write(Path(cfg.output_dir), "patterns.json", {**summary, "arrangement": patterns.to_dict()})
    print(f"{len(patterns)} patterns (rank {rank}, bound {bound})")
    return EXIT_OK


def _sgd(cfg: ExperimentConfig) -> int:
    X, y, _ = build_dataset(cfg.dataset, cfg.seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_sgd_trials(cfg, X, y)
    for trial, (_, trace) in enumerate(results):
        trace.to_frame().to_csv(out / f"trace_sgd_{trial}.csv", index=False, float_format="%.17g")
    finals = [trace.final for _, trace in results]
    _write(out, "sgd.json", {"final": finals, "diverged": [t.diverged for _, t in results]})
    print(f"SGD over {len(finals)} trials: best {np.min(finals):.10g}, worst {np.max(finals):.10g}")
    return EXIT_OK


def run(verb: str, cfg: ExperimentConfig) -> int:
    if verb == "enumerate":
        return _enumerate(cfg)
    if verb == "sgd":
        return _sgd(cfg)
    if verb == "gauge":
        result = run_gauge(cfg)
        print(f"gauge {result['gauge']:.8g}, polar support {result['polar_support']:.8g}")
        return EXIT_OK

    if verb == "cnn-nuclear":
        cfg = cfg.model_copy(update={"model": "linear-cnn"})
    elif verb == "cnn-circular":
        cfg = cfg.model_copy(update={"model": "circular-cnn"})
    report = run_experiment(cfg, include_sgd=verb in ("compare", "cnn-nuclear", "cnn-circular"))
    gap = "n/a" if report.certified_gap is None else f"{report.certified_gap:.3e}"
    print(f"convex objective {report.convex_objective:.10g}, gap {gap}, m* {report.m_star}")
    if report.sgd_final:
        print(f"SGD finals: {', '.join(f'{v:.10g}' for v in report.sgd_final)}")
    if not report.converged:
        logger.warning("Convex solve did not converge")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        level = load_config(args.config).get("logging", {}).get("level", "INFO")
        logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO))
        cfg = ExperimentConfig.load(args.config, seed=args.seed, threads=args.threads, output_dir=args.out)
        return run(args.verb, cfg)
    except (ConfigError, DatasetError, ShapeError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except ConvergenceError as e:
        logger.error(f"Solver failure: {e}")
        return EXIT_NOT_CONVERGED
    except ConvexReLUError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
