# src/core/program.py
"""
The finite convex training program over a set of activation patterns.

    min  loss(sum_i D_i X (v_i - w_i), y) + beta * sum_i (||v_i|| + ||w_i||)
    s.t. (2 D_i - I) X v_i >= 0,  (2 D_i - I) X w_i >= 0

plus the tools to evaluate it, certify a candidate through its dual, and
estimate the gauge / polar quantities of the rectified ellipsoid.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Any, List, Optional, TYPE_CHECKING

import numpy as np
from scipy.optimize import linprog

from .arrangements import ActivationPattern, ArrangementSet, enumerate_exact
from .errors import ConvergenceError, ShapeError
from .numerics import as_matrix, as_vector, nnls

if TYPE_CHECKING:
    from .solvers import SolverConfig

logger = logging.getLogger(__name__)

CERTIFICATE_RTOL = 1e-6


class LossKind(str, Enum):
    SQUARED = "squared"
    HINGE = "hinge"


def loss_value(kind: LossKind, prediction: np.ndarray, y: np.ndarray) -> float:
    """Squared loss is ``0.5 ||p - y||^2``; hinge is ``sum_j max(0, 1 - y_j p_j)``"""
    kind = LossKind(kind)
    if kind is LossKind.SQUARED:
        return 0.5 * float(np.sum((prediction - y) ** 2))
    return float(np.sum(np.maximum(0.0, 1.0 - y * prediction)))


@dataclass
class GroupSolution:
    """Row ``i`` of ``v`` / ``w`` is the variable pair of pattern ``i``"""
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.v = as_matrix(self.v, "v")
        self.w = as_matrix(self.w, "w")
        if self.v.shape != self.w.shape:
            raise ShapeError(f"v has shape {self.v.shape} but w has shape {self.w.shape}")

    @classmethod
    def zeros(cls, P: int, d: int) -> "GroupSolution":
        return cls(np.zeros((P, d)), np.zeros((P, d)))

    @property
    def P(self) -> int:
        return self.v.shape[0]

    def stacked(self) -> np.ndarray:
        """``(v_1, ..., v_P, w_1, ..., w_P)`` as one vector"""
        return np.concatenate([self.v.ravel(), self.w.ravel()])

    @classmethod
    def from_stacked(cls, x: np.ndarray, P: int, d: int) -> "GroupSolution":
        x = np.asarray(x, dtype=float)
        return cls(x[: P * d].reshape(P, d).copy(), x[P * d:].reshape(P, d).copy())

    def group_norms(self) -> np.ndarray:
        """Norms of ``v_1..v_P`` followed by ``w_1..w_P``"""
        return np.concatenate([np.linalg.norm(self.v, axis=1), np.linalg.norm(self.w, axis=1)])

    def nonzero_groups(self, rel_tol: float = 1e-10) -> int:
        norms = self.group_norms()
        if norms.size == 0 or norms.max() == 0.0:
            return 0
        return int(np.sum(norms > rel_tol * norms.max()))

    def to_dict(self) -> Dict[str, Any]:
        return {"v": self.v.tolist(), "w": self.w.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GroupSolution":
        return cls(np.asarray(data["v"], dtype=float), np.asarray(data["w"], dtype=float))


@dataclass
class ConvexTrainingProblem:
    X: np.ndarray
    y: np.ndarray
    beta: float
    patterns: ArrangementSet
    loss: LossKind = LossKind.SQUARED

    def __post_init__(self):
        self.X = as_matrix(self.X, "X")
        self.y = as_vector(self.y, "y")
        self.loss = LossKind(self.loss)
        n = self.X.shape[0]
        if self.y.shape[0] != n:
            raise ShapeError(f"X has {n} rows but y has length {self.y.shape[0]}")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ShapeError(f"beta must be a finite nonnegative number, got {self.beta}")
        if self.patterns.n != n:
            raise ShapeError(f"Pattern masks have length {self.patterns.n}, expected {n}")
        if len(self.patterns) == 0:
            raise ShapeError("The program needs at least one activation pattern")
        if self.loss is LossKind.HINGE and not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ShapeError("Hinge loss requires labels in {-1, +1}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def P(self) -> int:
        return len(self.patterns)

    def masks(self) -> np.ndarray:
        return self.patterns.masks().astype(float)

    def cone_matrices(self) -> List[np.ndarray]:
        """``(2 D_i - I) X`` for each pattern"""
        return [p.signs[:, None] * self.X for p in self.patterns.patterns]

    def design(self) -> np.ndarray:
        """``M = [D_1 X, ..., D_P X, -D_1 X, ..., -D_P X]`` so that ``M @ sol.stacked()`` is the fit"""
        blocks = [m[:, None] * self.X for m in self.masks()]
        positive = np.hstack(blocks)
        return np.hstack([positive, -positive])

    def fitted(self, sol: GroupSolution) -> np.ndarray:
        """``sum_i D_i X (v_i - w_i)``"""
        self._check(sol)
        Z = self.X @ (sol.v - sol.w).T
        return np.sum(self.masks().T * Z, axis=1)

    def _check(self, sol: GroupSolution):
        if sol.v.shape != (self.P, self.d):
            raise ShapeError(f"Solution has shape {sol.v.shape}, program expects {(self.P, self.d)}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "beta": self.beta,
            "loss": self.loss.value,
            "patterns": self.patterns.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ConvexTrainingProblem":
        return cls(
            X=np.asarray(data["X"], dtype=float),
            y=np.asarray(data["y"], dtype=float),
            beta=float(data["beta"]),
            patterns=ArrangementSet.from_dict(data["patterns"]),
            loss=LossKind(data.get("loss", "squared")),
        )


def objective(problem: ConvexTrainingProblem, sol: GroupSolution) -> float:
    prediction = problem.fitted(sol)
    penalty = float(np.sum(sol.group_norms()))
    return loss_value(problem.loss, prediction, problem.y) + problem.beta * penalty


def cone_violation(problem: ConvexTrainingProblem, sol: GroupSolution) -> float:
    """Magnitude of the most negative entry of ``(2 D_i - I) X v_i`` or ``(2 D_i - I) X w_i``"""
    problem._check(sol)
    worst = 0.0
    for i, A in enumerate(problem.cone_matrices()):
        worst = max(worst, -float(np.min(A @ sol.v[i])), -float(np.min(A @ sol.w[i])))
    return max(worst, 0.0)


@dataclass
class DualCertificate:
    v_hat: np.ndarray
    max_constraint: float
    max_constraint_violation: float
    primal_value: float
    dual_value: float
    certified_gap: float
    valid: bool
    scale: float = 1.0
    exact_patterns: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "v_hat": np.asarray(self.v_hat).tolist(),
            "max_constraint": self.max_constraint,
            "max_constraint_violation": self.max_constraint_violation,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "certified_gap": self.certified_gap,
            "valid": self.valid,
            "scale": self.scale,
            "exact_patterns": self.exact_patterns,
        }


def solve_region_dual(X, D: ActivationPattern, v, tol: Optional[float] = None) -> float:
    """
    ``max { v^T D X u : ||u|| <= 1, (2D - I) X u >= 0 }`` through its dual

        min_{a, b >= 0} || X^T D (v + a) - X^T (I - D) b ||

    which is a nonnegative least-squares problem in ``(a, b)``.
    """
    X = as_matrix(X, "X")
    v = as_vector(v, "v")
    if tol is not None and tol <= 0:
        raise ShapeError(f"tol must be positive, got {tol}")
    mask = D.array
    c = X[mask].T @ v[mask]
    if not np.any(c):
        return 0.0
    G = np.hstack([-X[mask].T, X[~mask].T])
    lam = nnls(G, c, tol=tol)
    return float(np.linalg.norm(G @ lam - c))


def _loss_dual_vector(problem: ConvexTrainingProblem, sol: GroupSolution,
                      loss_dual: Optional[np.ndarray]) -> np.ndarray:
    prediction = problem.fitted(sol)
    if problem.loss is LossKind.SQUARED:
        return problem.y - prediction
    y = problem.y
    if loss_dual is not None:
        theta = np.clip(y * as_vector(loss_dual, "loss_dual"), 0.0, 1.0)
    else:
        # samples strictly inside the margin carry full weight
        theta = (y * prediction < 1.0 - 1e-9).astype(float)
    return y * theta


def _dual_value(problem: ConvexTrainingProblem, v: np.ndarray) -> float:
    if problem.loss is LossKind.SQUARED:
        return -0.5 * float(np.sum((problem.y - v) ** 2)) + 0.5 * float(np.sum(problem.y ** 2))
    return float(problem.y @ v)


def dual_constraint(problem: ConvexTrainingProblem, v: np.ndarray, probe_count: int = 0, seed: int = 0,
                    directions: Optional[np.ndarray] = None) -> float:
    """
    ``max |v^T (X u)_+|`` over the program's regions (exactly) and over probe directions.

    ``directions`` holds extra probe vectors as columns.
    """
    X = problem.X
    worst = 0.0
    for pattern in problem.patterns.patterns:
        worst = max(worst, solve_region_dual(X, pattern, v), solve_region_dual(X, pattern, -v))

    probes = [np.column_stack(problem.patterns.witnesses)]
    if probe_count > 0:
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((problem.d, probe_count))
        probes.append(G / np.linalg.norm(G, axis=0))
    if directions is not None and np.size(directions):
        D = np.atleast_2d(np.asarray(directions, dtype=float))
        norms = np.linalg.norm(D, axis=0)
        keep = norms > 0
        probes.append(D[:, keep] / norms[keep])
    U = np.hstack(probes)
    worst = max(worst, float(np.max(np.abs(v @ np.maximum(X @ U, 0.0)), initial=0.0)))
    return worst


def dual_certificate(problem: ConvexTrainingProblem, sol: GroupSolution, probe_count: int = 2000, seed: int = 0,
                     loss_dual: Optional[np.ndarray] = None,
                     directions: Optional[np.ndarray] = None) -> DualCertificate:
    """
    Duality certificate of ``sol``.

    The candidate dual vector is ``y - yhat`` for squared loss and the solver's
    loss-block multiplier (clipped into the conjugate's domain) for hinge loss.
    It is scaled down to satisfy ``|v^T (X u)_+| <= beta`` before the dual value
    is evaluated, so ``dual_value`` always lower-bounds the program optimum;
    ``valid`` records whether the unscaled vector already satisfied it.
    """
    v_hat = _loss_dual_vector(problem, sol, loss_dual)
    beta = problem.beta
    constraint = dual_constraint(problem, v_hat, probe_count=probe_count, seed=seed, directions=directions)
    valid = constraint <= beta * (1.0 + CERTIFICATE_RTOL) + 1e-12
    scale = 1.0 if constraint <= beta or constraint == 0.0 else beta / constraint
    primal = objective(problem, sol)
    dual = _dual_value(problem, scale * v_hat)
    gap = primal - dual

    cert = DualCertificate(
        v_hat=v_hat,
        max_constraint=constraint,
        max_constraint_violation=max(0.0, constraint - beta),
        primal_value=primal,
        dual_value=dual,
        certified_gap=gap,
        valid=bool(valid),
        scale=scale,
        exact_patterns=problem.patterns.exact,
    )
    if valid:
        logger.info(f"Certificate: primal {primal:.10g}, dual {dual:.10g}, gap {gap:.3e}")
    else:
        logger.warning(f"Certificate invalid: dual constraint {constraint:.6g} exceeds beta={beta:.6g}; "
                       f"scaled bound gives gap {gap:.3e}")
    return cert


def gauge_value(X, y, beta_small: Optional[float] = None, solver_cfg: Optional["SolverConfig"] = None,
                patterns: Optional[ArrangementSet] = None) -> float:
    """
    ``sum_i ||v_i|| + ||w_i||`` of the program solved at a small ``beta``.

    As ``beta -> 0`` this increases to the gauge of ``y`` with respect to the
    convex hull of the rectified ellipsoid and its reflection.
    """
    from .solvers import SolverConfig, solve_group_cone

    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    norm_y = float(np.linalg.norm(y))
    if norm_y == 0.0:
        return 0.0
    if beta_small is None:
        beta_small = 1e-4 * norm_y
    if beta_small <= 0:
        raise ShapeError(f"beta_small must be positive, got {beta_small}")
    if patterns is None:
        patterns = enumerate_exact(X)
    problem = ConvexTrainingProblem(X, y, beta_small, patterns, LossKind.SQUARED)
    sol, diagnostics = solve_group_cone(problem, solver_cfg or SolverConfig())
    if not diagnostics.converged:
        logger.warning(f"Gauge solve at beta={beta_small:.3g} did not converge")
    value = float(np.sum(sol.group_norms()))
    logger.info(f"Gauge estimate {value:.8g} at beta={beta_small:.3g}")
    return value


def polar_support(X, y, sample_count: int, seed: int = 0, patterns: Optional[ArrangementSet] = None) -> float:
    """
    ``max y^T z`` subject to ``|z^T (X u)_+| <= 1`` for sampled unit ``u``.

    Solved as a linear program. Finitely many constraints relax the polar set,
    so the value is an upper bound that tightens as ``sample_count`` grows.
    Returns ``inf`` when the sampled constraints leave the LP unbounded.
    """
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    if sample_count < 1:
        raise ShapeError(f"sample_count must be at least 1, got {sample_count}")
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but y has length {y.shape[0]}")
    if not np.any(y):
        return 0.0

    rng = np.random.default_rng(seed)
    U = rng.standard_normal((X.shape[1], sample_count))
    U /= np.linalg.norm(U, axis=0)
    if patterns is not None and len(patterns):
        U = np.hstack([U, np.column_stack(patterns.witnesses)])
    A = np.maximum(X @ U, 0.0).T
    A = A[np.any(A > 0, axis=1)]
    if A.shape[0] == 0:
        return float("inf")
    res = linprog(
        -y,
        A_ub=np.vstack([A, -A]),
        b_ub=np.ones(2 * A.shape[0]),
        bounds=[(None, None)] * X.shape[0],
        method="highs",
    )
    if res.status == 3:
        return float("inf")
    if res.status != 0:
        raise ConvergenceError(f"Polar support LP failed: {res.message}")
    return float(-res.fun)
