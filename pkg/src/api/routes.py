from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field
from typing import Dict, Any, List, Literal
import logging

import numpy as np

from src.core.arrangements import enumerate_exact, region_count_bound, sample_patterns
from src.core.config import load_config, merge_with_defaults, resolve_run_dir
from src.core.errors import ConfigError, ConvexReLUError, ShapeError
from src.core.experiment import ExperimentConfig, run_experiment
from src.core.network import TwoLayerReLUNet, reconstruct, suboptimality_gap
from src.core.numerics import matrix_rank
from src.core.program import ConvexTrainingProblem, LossKind, dual_certificate
from src.core.solvers import SolverConfig, solve_group_cone

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/v1", tags=["convex"])


# --- Pydantic Models ---
class EnumerateRequest(BaseModel):
    X: List[List[float]]
    margin: float = Field(1e-6, gt=0)


class EnumerateResponse(BaseModel):
    count: int
    rank: int
    bound: int
    patterns: List[str]


class SolveRequest(BaseModel):
    X: List[List[float]]
    y: List[float]
    beta: float = Field(..., gt=0)
    loss: LossKind = LossKind.SQUARED
    pattern_source: Literal["exact", "sample"] = "exact"
    sample_count: int = Field(100, ge=1)
    seed: int = 0
    probe_count: int = Field(2000, ge=0)
    solver: SolverConfig = SolverConfig()


class SolveResponse(BaseModel):
    objective: float
    m_star: int
    converged: bool
    iterations: int
    network: Dict[str, Any]
    certificate: Dict[str, Any]


class CertifyRequest(BaseModel):
    X: List[List[float]]
    y: List[float]
    beta: float = Field(..., gt=0)
    loss: LossKind = LossKind.SQUARED
    network: Dict[str, Any]
    solver: SolverConfig = SolverConfig()


class CertifyResponse(BaseModel):
    nonconvex_cost: float
    dual_value: float
    suboptimality_gap: float


def _fail(e: Exception) -> HTTPException:
    if isinstance(e, (ConfigError, ShapeError)):
        logger.error(f"Rejected request: {e}")
        return HTTPException(status_code=422, detail=str(e))
    logger.error(f"Error processing request: {e}")
    return HTTPException(status_code=500, detail=f"Processing error: {str(e)}")


def _solve(X: np.ndarray, y: np.ndarray, beta: float, loss: LossKind, solver: SolverConfig,
           source: str = "exact", sample_count: int = 100, seed: int = 0, probe_count: int = 2000):
    patterns = enumerate_exact(X) if source == "exact" else sample_patterns(X, sample_count, seed)
    problem = ConvexTrainingProblem(X, y, beta, patterns, loss)
    sol, diagnostics = solve_group_cone(problem, solver)
    net = reconstruct(sol, patterns)
    certificate = dual_certificate(problem, sol, probe_count, seed,
                                   loss_dual=diagnostics.loss_dual, directions=net.U)
    return problem, net, diagnostics, certificate


# --- Route Handlers ---
@router.post("/enumerate", response_model=EnumerateResponse)
async def enumerate_patterns(request: EnumerateRequest):
    """Every activation pattern of the rows of X"""
    try:
        X = np.asarray(request.X, dtype=float)
        patterns = enumerate_exact(X, request.margin)
        rank = matrix_rank(X)
        return EnumerateResponse(
            count=len(patterns),
            rank=rank,
            bound=region_count_bound(X.shape[0], rank) if rank else 0,
            patterns=[p.to_string() for p in patterns.patterns],
        )
    except (ConvexReLUError, ValueError) as e:
        raise _fail(e)


@router.post("/solve", response_model=SolveResponse)
async def solve(request: SolveRequest):
    """Solve the convex program, reconstruct the network and certify it"""
    try:
        _, net, diagnostics, certificate = _solve(
            np.asarray(request.X, dtype=float), np.asarray(request.y, dtype=float), request.beta,
            request.loss, request.solver, request.pattern_source, request.sample_count,
            request.seed, request.probe_count,
        )
        return SolveResponse(
            objective=certificate.primal_value,
            m_star=net.m,
            converged=diagnostics.converged,
            iterations=diagnostics.iterations,
            network=net.to_dict(),
            certificate={k: v for k, v in certificate.to_dict().items() if k != "v_hat"},
        )
    except (ConvexReLUError, ValueError) as e:
        raise _fail(e)


@router.post("/certify", response_model=CertifyResponse)
async def certify(request: CertifyRequest):
    """Suboptimality of a given network against the exact convex optimum"""
    try:
        net = TwoLayerReLUNet.from_dict(request.network)
        problem, _, _, certificate = _solve(
            np.asarray(request.X, dtype=float), np.asarray(request.y, dtype=float), request.beta,
            request.loss, request.solver,
        )
        gap = suboptimality_gap(net, problem, certificate)
        return CertifyResponse(
            nonconvex_cost=gap + certificate.dual_value,
            dual_value=certificate.dual_value,
            suboptimality_gap=gap,
        )
    except (ConvexReLUError, ValueError, KeyError) as e:
        raise _fail(e)


@router.post("/experiment")
async def experiment(config: Dict[str, Any]):
    """
    Run an inline experiment config and return its report.

    Outputs go to ``<api.runs_root>/<run_name>``; a client-supplied ``output_dir`` is refused.
    """
    try:
        config = dict(config)
        nested = config.get("experiment")
        if "output_dir" in config or (isinstance(nested, dict) and "output_dir" in nested):
            raise ConfigError("output_dir cannot be set over HTTP; pass run_name instead")
        run_name = config.pop("run_name", "default")
        runs_root = load_config().get("api", {}).get("runs_root", "runs/api")
        config["output_dir"] = str(resolve_run_dir(runs_root, run_name))
        cfg = ExperimentConfig.from_config(merge_with_defaults(config))
        return run_experiment(cfg).to_dict()
    except (ConvexReLUError, ValueError) as e:
        raise _fail(e)
