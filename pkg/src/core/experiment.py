# src/core/experiment.py
"""
Experiment orchestration: dataset, pattern acquisition, convex solve,
certificate, reconstruction, SGD trials and the files they leave behind.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, Any, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError, model_validator

from .arrangements import (ArrangementSet, adaptive_flip, enumerate_exact, harvest_patterns,
                           region_count_bound, sample_patterns)
from .baseline import (TrainConfig, TrainTrace, init_gaussian, train_circular_cnn_gd, train_linear_cnn_gd,
                       train_sgd)
from .cnn import (CirculantSpec, extract_patches, filter_distance, nuclear_duality_gap, recover_filter,
                  stack_separable, train_circular_cnn, train_linear_cnn)
from .config import load_config
from .datasets import append_ones, dataset_2d_synthetic, dataset_toy_1d, load_csv, random_signals
from .errors import ConfigError
from .network import TwoLayerReLUNet, evaluate, predict, reconstruct, suboptimality_gap
from .numerics import matrix_rank
from .program import ConvexTrainingProblem, LossKind, dual_certificate, gauge_value, polar_support
from .solvers import SolverConfig, SolverDiagnostics, solve_group_cone

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
GRID_SIZE = 50


class DatasetSpec(BaseModel):
    builtin: Optional[Literal["toy_1d", "clusters", "anomaly", "random_signals"]] = None
    csv: Optional[str] = None
    label_col: str = "y"
    n: int = Field(50, ge=1)
    width: int = Field(8, ge=1)
    seed: Optional[int] = None
    append_ones: bool = False

    @model_validator(mode="after")
    def _one_source(self):
        if (self.builtin is None) == (self.csv is None):
            raise ValueError("dataset needs exactly one of 'builtin' or 'csv'")
        return self


class PatternSpec(BaseModel):
    source: Literal["exact", "sample", "approximate", "alg1", "alg2", "alg3"] = "exact"
    count: Optional[int] = Field(None, ge=1)
    quantile: float = Field(0.1, gt=0, lt=1)


class CnnSpec(BaseModel):
    height: int = Field(1, ge=1)
    width: Optional[int] = Field(None, ge=1)
    channels: int = Field(1, ge=1)
    filter_h: int = Field(1, ge=1)
    filter_w: Optional[int] = Field(None, ge=1)
    stride: int = Field(1, ge=1)
    filter_len: Optional[int] = Field(None, ge=1)
    dft_norm: Literal["backward", "ortho"] = "backward"
    penalty_scale: Optional[float] = Field(None, ge=0)


class GaugeSpec(BaseModel):
    beta_scale: float = Field(1e-4, gt=0)
    sample_count: int = Field(4000, ge=1)


class ExperimentConfig(BaseModel):
    dataset: DatasetSpec
    model: Literal["relu", "linear-cnn", "circular-cnn", "separable-cnn"] = "relu"
    patterns: PatternSpec = PatternSpec()
    beta: float = Field(1e-3, gt=0)
    loss: LossKind = LossKind.SQUARED
    solver: SolverConfig = SolverConfig()
    sgd: Dict[str, Any] = Field(default_factory=dict)
    cnn: CnnSpec = CnnSpec()
    gauge: GaugeSpec = GaugeSpec()
    probe_count: int = Field(2000, ge=0)
    sample_count: int = Field(100, ge=1)
    margin_scale: float = Field(1e-6, gt=0)
    trials: int = Field(10, ge=1)
    seed: int = 0
    threads: int = Field(1, ge=1)
    test_fraction: float = Field(0.0, ge=0, lt=1)
    output_dir: str = "runs/default"

    def train_config(self, trial: int = 0) -> TrainConfig:
        """SGD settings for one trial; beta and loss always follow the experiment"""
        data = dict(self.sgd)
        data.update(seed=self.seed + trial + int(data.get("seed", 0)), beta=self.beta, loss=self.loss)
        return TrainConfig.from_mapping(data)

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "ExperimentConfig":
        """Build from a merged ``load_config`` mapping"""
        defaults = config.get("experiment", {})
        data = {k: v for k, v in config.items()
                if k not in ("experiment", "logging", "arrangements", "certificate", "api")}
        for key in ("trials", "threads", "seed", "test_fraction", "output_dir"):
            data.setdefault(key, defaults.get(key))
        data = {k: v for k, v in data.items() if v is not None}
        arrangements = config.get("arrangements", {})
        data.setdefault("sample_count", arrangements.get("sample_count", 100))
        data.setdefault("margin_scale", arrangements.get("margin_scale", 1e-6))
        data.setdefault("probe_count", config.get("certificate", {}).get("probe_count", 2000))
        if isinstance(data.get("patterns"), str):
            data["patterns"] = {"source": data["patterns"]}
        try:
            return cls(**data)
        except ValidationError as e:
            raise ConfigError(f"Invalid experiment config: {e}") from e

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None, seed: Optional[int] = None,
             threads: Optional[int] = None, output_dir: Optional[str] = None) -> "ExperimentConfig":
        config = load_config(path)
        if seed is not None:
            config["seed"] = seed
        if threads is not None:
            config["threads"] = threads
        if output_dir is not None:
            config["output_dir"] = output_dir
        return cls.from_config(config)


@dataclass
class RunReport:
    model: str
    n: int
    d: int
    convex_objective: float
    certified_gap: Optional[float]
    certificate_valid: bool
    exact_patterns: bool
    converged: bool
    iterations: int
    m_star: int
    pattern_count: int
    pattern_source: Optional[str] = None
    region_bound: Optional[int] = None
    rank: Optional[int] = None
    sgd_final: List[float] = field(default_factory=list)
    sgd_gaps: List[Optional[float]] = field(default_factory=list)
    sgd_diverged: List[bool] = field(default_factory=list)
    train_error: Optional[float] = None
    test_error: Optional[float] = None
    sgd_train_error: List[float] = field(default_factory=list)
    sgd_test_error: List[float] = field(default_factory=list)
    filter_distance: Optional[float] = None
    convex_wall_ms: float = 0.0
    sgd_wall_ms: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunReport":
        return cls(**data)


def build_dataset(spec: DatasetSpec, seed: int = 0) -> Tuple[np.ndarray, np.ndarray, int]:
    """Returns ``(X, y, raw feature count)``; the bias column is appended after counting"""
    data_seed = spec.seed if spec.seed is not None else seed
    if spec.csv is not None:
        X, y = load_csv(spec.csv, spec.label_col)
    elif spec.builtin == "toy_1d":
        X, y = dataset_toy_1d()
        return X, y, 1
    elif spec.builtin in ("clusters", "anomaly"):
        X, y = dataset_2d_synthetic(spec.builtin, spec.n, data_seed)
    else:
        X, y = random_signals(spec.n, spec.width, data_seed)
    raw = X.shape[1]
    if spec.append_ones:
        X = append_ones(X)
    return X, y, raw


def split_dataset(X: np.ndarray, y: np.ndarray, test_fraction: float,
                  seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    n = X.shape[0]
    n_test = int(round(test_fraction * n))
    if n_test == 0:
        return X, y, X[:0], y[:0]
    if n_test >= n:
        raise ConfigError(f"test_fraction={test_fraction} leaves no training samples")
    order = np.random.default_rng([seed, 2]).permutation(n)
    test, train = order[:n_test], order[n_test:]
    return X[train], y[train], X[test], y[test]


def acquire_patterns(cfg: ExperimentConfig, X: np.ndarray, y: np.ndarray) -> ArrangementSet:
    spec = cfg.patterns
    train_cfg = cfg.train_config(0)
    if spec.source == "exact":
        return enumerate_exact(X, cfg.margin_scale)
    if spec.source == "sample":
        return sample_patterns(X, spec.count or cfg.sample_count, cfg.seed)
    if spec.source == "approximate":
        return sample_patterns(X, spec.count or train_cfg.m, cfg.seed)
    initial = init_gaussian(X.shape[1], train_cfg.m, train_cfg.seed, train_cfg.init_scale)
    if spec.source == "alg1":
        trained, _ = train_sgd(X, y, train_cfg, net=initial)
        return harvest_patterns(X, trained).union(sample_patterns(X, spec.count or cfg.sample_count, cfg.seed))
    if spec.source == "alg2":
        return harvest_patterns(X, initial)
    return adaptive_flip(X, initial, spec.quantile, cfg.margin_scale)


def _sgd_trial(trial: int, cfg: ExperimentConfig, X: np.ndarray, y: np.ndarray) -> Tuple[TwoLayerReLUNet, TrainTrace]:
    return train_sgd(X, y, cfg.train_config(trial))


def run_sgd_trials(cfg: ExperimentConfig, X: np.ndarray, y: np.ndarray) -> List[Tuple[TwoLayerReLUNet, TrainTrace]]:
    """Independent seeded trials in a thread pool; results come back in trial order"""
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = [pool.submit(_sgd_trial, trial, cfg, X, y) for trial in range(cfg.trials)]
        return [f.result() for f in futures]


def _write_json(path: Path, payload: Dict[str, Any]):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)


def _write_trace(path: Path, frame: pd.DataFrame):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def _convex_trace(diagnostics: SolverDiagnostics) -> pd.DataFrame:
    return pd.DataFrame({
        "iteration": np.arange(1, len(diagnostics.objective_trace) + 1),
        "objective": diagnostics.objective_trace,
    })


def decision_grid(X_raw: np.ndarray, nets: Dict[str, TwoLayerReLUNet], with_bias: bool) -> pd.DataFrame:
    """Scores of each network on a regular grid spanning 2-D data"""
    lo = X_raw.min(axis=0) - 0.5
    hi = X_raw.max(axis=0) + 0.5
    g1, g2 = np.meshgrid(np.linspace(lo[0], hi[0], GRID_SIZE), np.linspace(lo[1], hi[1], GRID_SIZE))
    points = np.column_stack([g1.ravel(), g2.ravel()])
    features = append_ones(points) if with_bias else points
    frame = pd.DataFrame({"x1": points[:, 0], "x2": points[:, 1]})
    for name, net in nets.items():
        frame[name] = predict(net, features)
    return frame


class _StageTracker:
    def __init__(self):
        self.stage = "setup"


def run_experiment(cfg: ExperimentConfig, include_sgd: bool = True) -> RunReport:
    """
    Run the configured pipeline and write its outputs to ``cfg.output_dir``.

    On failure an ``error.json`` naming the stage is written before re-raising.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tracker = _StageTracker()
    try:
        if cfg.model == "linear-cnn":
            report = _run_linear_cnn(cfg, out, tracker, include_sgd)
        elif cfg.model == "circular-cnn":
            report = _run_circular_cnn(cfg, out, tracker, include_sgd)
        else:
            report = _run_relu(cfg, out, tracker, include_sgd)
    except Exception as e:
        logger.error(f"Experiment failed during stage '{tracker.stage}': {e}")
        _write_json(out / "error.json", {"stage": tracker.stage, "error": type(e).__name__, "message": str(e)})
        raise
    tracker.stage = "report"
    _write_json(out / "report.json", report.to_dict())
    logger.info(f"Report written to {out / 'report.json'}")
    return report


def _run_relu(cfg: ExperimentConfig, out: Path, tracker: _StageTracker, include_sgd: bool) -> RunReport:
    tracker.stage = "dataset"
    X_all, y_all, raw_d = build_dataset(cfg.dataset, cfg.seed)
    if cfg.model == "separable-cnn":
        geometry = _geometry(cfg, X_all.shape[1])
        patches = extract_patches(X_all, **geometry)
        # datasets carry one label per sample, so every patch of a sample is fit to that label
        X_all, y_all = stack_separable(patches, [y_all] * patches.K)
        raw_d = X_all.shape[1]
    X, y, X_test, y_test = split_dataset(X_all, y_all, cfg.test_fraction, cfg.seed)

    tracker.stage = "patterns"
    patterns = acquire_patterns(cfg, X, y)
    rank = matrix_rank(X)
    logger.info(f"Using {len(patterns)} patterns from source '{cfg.patterns.source}'")

    tracker.stage = "solve"
    problem = ConvexTrainingProblem(X, y, cfg.beta, patterns, cfg.loss)
    sol, diagnostics = solve_group_cone(problem, cfg.solver)
    _write_trace(out / "trace_convex.csv", _convex_trace(diagnostics))

    tracker.stage = "reconstruct"
    net = reconstruct(sol, patterns)
    _write_json(out / "network.json", net.to_dict())

    tracker.stage = "certificate"
    certificate = dual_certificate(problem, sol, cfg.probe_count, cfg.seed,
                                   loss_dual=diagnostics.loss_dual, directions=net.U)

    report = RunReport(
        model=cfg.model,
        n=problem.n,
        d=problem.d,
        convex_objective=certificate.primal_value,
        certified_gap=certificate.certified_gap,
        certificate_valid=certificate.valid,
        exact_patterns=certificate.exact_patterns,
        converged=diagnostics.converged,
        iterations=diagnostics.iterations,
        m_star=net.m,
        pattern_count=len(patterns),
        pattern_source=cfg.patterns.source,
        region_bound=region_count_bound(problem.n, rank) if rank >= 1 else None,
        rank=rank,
        train_error=evaluate(net, X, y, cfg.loss),
        test_error=evaluate(net, X_test, y_test, cfg.loss) if len(y_test) else None,
        convex_wall_ms=diagnostics.wall_ms,
    )
    if not include_sgd:
        return report

    tracker.stage = "sgd"
    results = run_sgd_trials(cfg, X, y)
    for trial, (trained, trace) in enumerate(results):
        _write_trace(out / f"trace_sgd_{trial}.csv", trace.to_frame())
        report.sgd_final.append(trace.final)
        report.sgd_diverged.append(trace.diverged)
        report.sgd_wall_ms.append(trace.wall_ms[-1])
        report.sgd_train_error.append(evaluate(trained, X, y, cfg.loss))
        if len(y_test):
            report.sgd_test_error.append(evaluate(trained, X_test, y_test, cfg.loss))
        report.sgd_gaps.append(suboptimality_gap(trained, problem, certificate) if certificate.valid else None)

    if raw_d == 2 and cfg.model == "relu":
        tracker.stage = "decision_grid"
        best = int(np.argmin(report.sgd_final))
        frame = decision_grid(X_all[:, :2], {"convex_score": net, "sgd_score": results[best][0]},
                              with_bias=cfg.dataset.append_ones)
        _write_trace(out / "decision_grid.csv", frame)
    return report


def _geometry(cfg: ExperimentConfig, columns: int) -> Dict[str, int]:
    spec = cfg.cnn
    width = spec.width or columns // (spec.height * spec.channels)
    return {
        "height": spec.height,
        "width": width,
        "channels": spec.channels,
        "filter_h": spec.filter_h,
        "filter_w": spec.filter_w or width,
        "stride": spec.stride,
    }


def _run_linear_cnn(cfg: ExperimentConfig, out: Path, tracker: _StageTracker, include_sgd: bool) -> RunReport:
    if cfg.loss is not LossKind.SQUARED:
        raise ConfigError("linear-cnn experiments use squared loss")
    tracker.stage = "dataset"
    X, y, _ = build_dataset(cfg.dataset, cfg.seed)
    patches = extract_patches(X, **_geometry(cfg, X.shape[1]))

    tracker.stage = "solve"
    Z, diagnostics, sdp_check = train_linear_cnn(patches, y, cfg.beta, cfg.solver)
    _write_trace(out / "trace_convex.csv", _convex_trace(diagnostics))
    _write_json(out / "network.json", {"K": patches.K, "d": patches.d, "Z": Z.tolist()})

    tracker.stage = "certificate"
    gap, _ = nuclear_duality_gap(patches, y, cfg.beta, Z)
    objective = diagnostics.objective_trace[-1]
    report = RunReport(
        model=cfg.model,
        n=patches.n,
        d=patches.d,
        convex_objective=objective,
        certified_gap=gap,
        certificate_valid=bool(sdp_check <= cfg.beta * (1.0 + 1e-6)),
        exact_patterns=True,
        converged=diagnostics.converged,
        iterations=diagnostics.iterations,
        m_star=int(matrix_rank(Z)) if np.any(Z) else 0,
        pattern_count=patches.K,
        convex_wall_ms=diagnostics.wall_ms,
    )
    if not include_sgd:
        return report

    tracker.stage = "sgd"
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = [pool.submit(train_linear_cnn_gd, patches, y, cfg.train_config(t)) for t in range(cfg.trials)]
        results = [f.result() for f in futures]
    for trial, (model, trace) in enumerate(results):
        _write_trace(out / f"trace_sgd_{trial}.csv", trace.to_frame())
        report.sgd_final.append(trace.final)
        report.sgd_diverged.append(trace.diverged)
        report.sgd_wall_ms.append(trace.wall_ms[-1])
        report.sgd_gaps.append(trace.final - (objective - gap))
    best = int(np.argmin(report.sgd_final))
    report.filter_distance = filter_distance(results[best][0].effective(), Z) if np.any(Z) else None
    return report


def _run_circular_cnn(cfg: ExperimentConfig, out: Path, tracker: _StageTracker, include_sgd: bool) -> RunReport:
    tracker.stage = "dataset"
    X, y, _ = build_dataset(cfg.dataset, cfg.seed)
    spec = CirculantSpec(
        filter_len=cfg.cnn.filter_len or X.shape[1],
        signal_len=X.shape[1],
        dft_norm=cfg.cnn.dft_norm,
        penalty_scale=cfg.cnn.penalty_scale,
    )

    tracker.stage = "solve"
    z, value, diagnostics = train_circular_cnn(X, y, cfg.beta, spec, cfg.solver)
    _write_trace(out / "trace_convex.csv", _convex_trace(diagnostics))
    _write_json(out / "network.json", {
        "z_real": np.real(z).tolist(),
        "z_imag": np.imag(z).tolist(),
        "filter": recover_filter(z, spec).tolist(),
        "dft_norm": spec.dft_norm,
    })
    report = RunReport(
        model=cfg.model,
        n=X.shape[0],
        d=X.shape[1],
        convex_objective=value,
        certified_gap=None,
        certificate_valid=False,
        exact_patterns=not spec.is_relaxation,
        converged=diagnostics.converged,
        iterations=diagnostics.iterations,
        m_star=int(np.sum(np.abs(z) > 1e-10 * max(float(np.max(np.abs(z), initial=0.0)), 1e-300))),
        pattern_count=spec.signal_len,
        convex_wall_ms=diagnostics.wall_ms,
    )
    if not include_sgd:
        return report
    if cfg.loss is not LossKind.SQUARED or cfg.cnn.penalty_scale is not None:
        logger.info("Skipping circular CNN gradient descent: the convex value is only comparable "
                    "for squared loss at the default penalty")
        return report

    tracker.stage = "sgd"
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = [pool.submit(train_circular_cnn_gd, X, y, cfg.train_config(t), spec.filter_len)
                   for t in range(cfg.trials)]
        results = [f.result() for f in futures]
    for trial, (model, trace) in enumerate(results):
        _write_trace(out / f"trace_sgd_{trial}.csv", trace.to_frame())
        report.sgd_final.append(trace.final)
        report.sgd_diverged.append(trace.diverged)
        report.sgd_wall_ms.append(trace.wall_ms[-1])
        report.sgd_gaps.append(trace.final - value)
    best = int(np.argmin(report.sgd_final))
    w = recover_filter(z, spec)
    report.filter_distance = filter_distance(results[best][0].effective()[:, None], w[:, None]) if np.any(w) else None
    return report


def run_gauge(cfg: ExperimentConfig) -> Dict[str, float]:
    """Gauge along the small-beta path next to the sampled polar support"""
    X, y, _ = build_dataset(cfg.dataset, cfg.seed)
    patterns = enumerate_exact(X, cfg.margin_scale)
    beta_small = cfg.gauge.beta_scale * float(np.linalg.norm(y))
    gauge = gauge_value(X, y, beta_small, cfg.solver, patterns)
    support = polar_support(X, y, cfg.gauge.sample_count, cfg.seed, patterns)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = {"gauge": gauge, "polar_support": support, "beta_small": beta_small}
    _write_json(out / "gauge.json", result)
    return result
