# src/core/solvers.py
"""
First-order solvers for the convex programs.

- ``solve_group_cone``: ADMM for the cone-constrained group lasso, polished by
  interior-point solves on the active patterns
- ``fista_complex_lasso``: FISTA with restart for the Fourier-domain lasso
- ``solve_nuclear``: accelerated proximal gradient with singular value thresholding
"""
import time
import logging
from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Sequence, Tuple, Union

import cvxpy as cp
import numpy as np
from pydantic import BaseModel, Field, ValidationError
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, ConvergenceError, ShapeError
from .numerics import as_matrix, as_vector, nnls, power_sigma_max
from .program import (CERTIFICATE_RTOL, ConvexTrainingProblem, DualCertificate, GroupSolution, LossKind,
                      dual_certificate, loss_value, solve_region_dual)

logger = logging.getLogger(__name__)

# restricted solutions: groups below ZERO_RTOL of the largest norm are set to zero,
# groups below SUPPORT_RTOL are dropped from the support and the solve is repeated
ZERO_RTOL = 1e-9
SUPPORT_RTOL = 1e-6


class SolverConfig(BaseModel):
    rho: float = Field(1.0, gt=0)
    tol_abs: float = Field(1e-8, gt=0)
    tol_rel: float = Field(1e-7, gt=0)
    max_iter: int = Field(20000, ge=1)
    seed: int = 0
    balance_factor: float = Field(2.0, gt=1)
    balance_ratio: float = Field(10.0, gt=1)
    log_every: int = Field(500, ge=1)
    relaxation: float = Field(1.6, gt=0, lt=2)
    polish: bool = True
    polish_every: int = Field(100, ge=1)
    polish_rounds: int = Field(20, ge=1)
    gap_rtol: float = Field(1e-6, gt=0)

    @classmethod
    def from_mapping(cls, data: Optional[Dict[str, Any]]) -> "SolverConfig":
        try:
            return cls(**(data or {}))
        except ValidationError as e:
            raise ConfigError(f"Invalid solver config: {e}") from e


@dataclass
class SolverDiagnostics:
    iterations: int = 0
    primal_residual: float = float("inf")
    dual_residual: float = float("inf")
    objective_trace: List[float] = field(default_factory=list)
    converged: bool = False
    rho: Optional[float] = None
    wall_ms: float = 0.0
    # loss-block multiplier of the ADMM split; hinge certificates are built from it
    loss_dual: Optional[np.ndarray] = None
    certified_gap: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "objective_trace": list(self.objective_trace),
            "converged": self.converged,
            "rho": self.rho,
            "wall_ms": self.wall_ms,
            "loss_dual": None if self.loss_dual is None else np.asarray(self.loss_dual).tolist(),
            "certified_gap": self.certified_gap,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SolverDiagnostics":
        loss_dual = data.get("loss_dual")
        return cls(
            iterations=int(data["iterations"]),
            primal_residual=float(data["primal_residual"]),
            dual_residual=float(data["dual_residual"]),
            objective_trace=[float(v) for v in data.get("objective_trace", [])],
            converged=bool(data["converged"]),
            rho=data.get("rho"),
            wall_ms=float(data.get("wall_ms", 0.0)),
            loss_dual=None if loss_dual is None else np.asarray(loss_dual, dtype=float),
            certified_gap=data.get("certified_gap"),
        )


def cone_project(x, A) -> np.ndarray:
    """
    Euclidean projection of ``x`` onto ``{z : A z >= 0}``.

    By Moreau's decomposition the projection is ``x + A^T lam`` where
    ``lam = argmin_{lam >= 0} ||A^T lam + x||``.
    """
    x = as_vector(x, "x")
    A = as_matrix(A, "A")
    if A.shape[1] != x.shape[0]:
        raise ShapeError(f"A has {A.shape[1]} columns but x has length {x.shape[0]}")
    return _cone_project(x, A)


def _cone_project(x: np.ndarray, A: np.ndarray) -> np.ndarray:
    if np.all(A @ x >= 0.0):
        return x.copy()
    lam = nnls(A.T, -x)
    return x + A.T @ lam


def _project_groups(G: np.ndarray, X: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Project row ``g`` of ``G`` onto the cone of ``signs[g]``; NNLS runs only for infeasible rows"""
    out = G.copy()
    infeasible = np.flatnonzero(np.any(signs * (G @ X.T) < 0.0, axis=1))
    for g in infeasible:
        out[g] = _cone_project(G[g], signs[g][:, None] * X)
    return out


def group_soft_threshold(v, tau: float) -> np.ndarray:
    if tau < 0:
        raise ShapeError(f"tau must be nonnegative, got {tau}")
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= tau:
        return np.zeros_like(v)
    return (1.0 - tau / norm) * v


def _soft_threshold_rows(G: np.ndarray, tau: float) -> np.ndarray:
    norms = np.linalg.norm(G, axis=1)
    scale = np.where(norms > tau, 1.0 - tau / np.where(norms > 0.0, norms, 1.0), 0.0)
    return G * scale[:, None]


def _loss_prox(loss: LossKind, a: np.ndarray, y: np.ndarray, rho: float) -> np.ndarray:
    """``argmin_r loss(r) + (rho/2) ||r - a||^2``"""
    if loss is LossKind.SQUARED:
        return (y + rho * a) / (1.0 + rho)
    t = y * a
    t_new = np.where(t >= 1.0, t, np.where(t <= 1.0 - 1.0 / rho, t + 1.0 / rho, 1.0))
    return y * t_new


def _final_solution(s: np.ndarray, X: np.ndarray, signs: np.ndarray, P: int, d: int) -> GroupSolution:
    """Project every nonzero group of the thresholded iterate back onto its cone"""
    groups = s.reshape(2 * P, d)
    projected = _project_groups(groups, X, signs)
    projected[~np.any(groups, axis=1)] = 0.0
    return GroupSolution(projected[:P], projected[P:])


def _solve_restricted(problem: ConvexTrainingProblem,
                      active: np.ndarray) -> Tuple[GroupSolution, Optional[np.ndarray]]:
    """
    Interior-point solve of the program over the groups flagged in ``active``
    (``v_1..v_P`` then ``w_1..w_P``); every other group is fixed at zero.

    Returns the solution and, for hinge loss, the loss-block multiplier ``y * theta``.
    """
    P, d, n = problem.P, problem.d, problem.n
    X, y = problem.X, problem.y
    masks = problem.masks()
    sol = GroupSolution.zeros(P, d)
    blocks = [(idx, sign) for idx, sign in ((np.flatnonzero(active[:P]), 1.0), (np.flatnonzero(active[P:]), -1.0))
              if idx.size]
    if not blocks:
        return sol, None

    fit, penalty, constraints, variables = 0, 0, [], []
    for idx, sign in blocks:
        U = cp.Variable((d, idx.size))
        D = masks[idx].T
        XU = X @ U
        fit = fit + sign * cp.sum(cp.multiply(D, XU), axis=1)
        penalty = penalty + cp.mixed_norm(U.T, 2, 1)
        constraints.append(cp.multiply(2.0 * D - 1.0, XU) >= 0)
        variables.append((idx, sign, U))

    margin = None
    if problem.loss is LossKind.SQUARED:
        loss = 0.5 * cp.sum_squares(fit - y)
    else:
        slack = cp.Variable(n, nonneg=True)
        margin = slack >= 1.0 - cp.multiply(y, fit)
        constraints.append(margin)
        loss = cp.sum(slack)

    program = cp.Problem(cp.Minimize(loss + problem.beta * penalty), constraints)
    try:
        program.solve()
    except cp.SolverError as e:
        raise ConvergenceError(f"Restricted solve failed: {e}") from e
    if program.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise ConvergenceError(f"Restricted solve ended with status {program.status}")

    largest = max(float(np.max(np.linalg.norm(U.value, axis=0))) for _, _, U in variables)
    cutoff = ZERO_RTOL * max(1.0, largest)
    for idx, sign, U in variables:
        target = sol.v if sign > 0 else sol.w
        for k, i in enumerate(idx):
            group = np.asarray(U.value[:, k], dtype=float)
            if np.linalg.norm(group) > cutoff:
                target[i] = _cone_project(group, problem.patterns.patterns[i].signs[:, None] * X)

    loss_dual = None if margin is None else y * np.clip(np.asarray(margin.dual_value, dtype=float), 0.0, 1.0)
    return sol, loss_dual


def polish_group_cone(problem: ConvexTrainingProblem, sol: GroupSolution,
                      cfg: SolverConfig) -> Tuple[GroupSolution, Optional[np.ndarray], DualCertificate]:
    """
    Refine ``sol`` on its support and grow the support until the certificate holds.

    Each round solves the program restricted to the current groups, then adds
    every group whose region dual exceeds ``beta`` at the candidate dual vector.
    Stops when the certificate is valid, when no group can be added, or after
    ``cfg.polish_rounds`` rounds; the best certificate seen is returned.
    """
    P = problem.P
    norms = sol.group_norms()
    active = norms > SUPPORT_RTOL * float(norms.max(initial=0.0))
    limit = problem.beta * (1.0 + CERTIFICATE_RTOL)

    best = None
    for round_ in range(1, cfg.polish_rounds + 1):
        candidate, loss_dual = _solve_restricted(problem, active)
        norms = candidate.group_norms()
        negligible = active & (norms <= SUPPORT_RTOL * float(norms.max(initial=0.0)))
        if np.any(negligible) and not np.all(negligible[active]):
            active &= ~negligible
            candidate, loss_dual = _solve_restricted(problem, active)
        cert = dual_certificate(problem, candidate, probe_count=0, loss_dual=loss_dual)
        if best is None or (cert.valid, -cert.certified_gap) > (best[2].valid, -best[2].certified_gap):
            best = (candidate, loss_dual, cert)
        if cert.valid:
            break

        added = 0
        for i, pattern in enumerate(problem.patterns.patterns):
            if not active[i] and solve_region_dual(problem.X, pattern, cert.v_hat) > limit:
                active[i] = True
                added += 1
            if not active[P + i] and solve_region_dual(problem.X, pattern, -cert.v_hat) > limit:
                active[P + i] = True
                added += 1
        logger.debug(f"Polish round {round_}: certificate invalid, {added} groups added")
        if not added:
            break
    return best


def _try_polish(problem: ConvexTrainingProblem, sol: GroupSolution, cfg: SolverConfig):
    try:
        return polish_group_cone(problem, sol, cfg)
    except ConvergenceError as e:
        logger.warning(f"Polishing skipped: {e}")
        return None


def _certified(cert: DualCertificate, cfg: SolverConfig) -> bool:
    return cert.valid and cert.certified_gap <= cfg.gap_rtol * (1.0 + abs(cert.primal_value))


def solve_group_cone(problem: ConvexTrainingProblem, cfg: SolverConfig) -> Tuple[GroupSolution, SolverDiagnostics]:
    """
    ADMM on the split ``r = M x`` (loss), ``s = x`` (group norms), ``t = x`` (cones).

    The x-update solves ``(M^T M + 2 I) x = M^T (r - u_r) + (s - u_s) + (t - u_t)``.
    That matrix does not depend on ``rho``, so it is factored once through the
    ``n x n`` system ``2 I + M M^T``. The z-updates use over-relaxation
    ``cfg.relaxation`` and ``rho`` follows residual balancing.

    With ``cfg.polish`` the iterate is refined every ``cfg.polish_every``
    iterations (and once more after the residuals meet tolerance) by
    ``polish_group_cone``; the run stops as soon as a refined point carries a
    certified gap within ``cfg.gap_rtol``. ``converged`` is only reported
    together with a valid duality certificate for the program's pattern set.
    """
    start = time.perf_counter()
    P, d, n = problem.P, problem.d, problem.n
    N = 2 * P * d
    M = problem.design()
    X = problem.X
    signs = np.vstack([p.signs for p in problem.patterns.patterns] * 2).astype(float)
    y = problem.y
    beta = problem.beta
    alpha = cfg.relaxation

    small = cho_factor(2.0 * np.eye(n) + M @ M.T)

    def x_update(rhs: np.ndarray) -> np.ndarray:
        return 0.5 * (rhs - M.T @ cho_solve(small, M @ rhs))

    x = np.zeros(N)
    r = np.zeros(n)
    s = np.zeros(N)
    t = np.zeros(N)
    u_r = np.zeros(n)
    u_s = np.zeros(N)
    u_t = np.zeros(N)
    rho = cfg.rho
    diagnostics = SolverDiagnostics()
    residuals_met = False
    polished = None

    for it in range(1, cfg.max_iter + 1):
        x = x_update(M.T @ (r - u_r) + (s - u_s) + (t - u_t))
        Mx = M @ x
        Mx_hat = alpha * Mx + (1.0 - alpha) * r
        xs_hat = alpha * x + (1.0 - alpha) * s
        xt_hat = alpha * x + (1.0 - alpha) * t

        r_old, s_old, t_old = r, s, t
        r = _loss_prox(problem.loss, Mx_hat + u_r, y, rho)
        s = _soft_threshold_rows((xs_hat + u_s).reshape(2 * P, d), beta / rho).ravel()
        t = _project_groups((xt_hat + u_t).reshape(2 * P, d), X, signs).ravel()

        u_r += Mx_hat - r
        u_s += xs_hat - s
        u_t += xt_hat - t

        primal = np.sqrt(np.sum((Mx - r) ** 2) + np.sum((x - s) ** 2) + np.sum((x - t) ** 2))
        dual = rho * np.linalg.norm(M.T @ (r - r_old) + (s - s_old) + (t - t_old))
        eps_primal = np.sqrt(n + 2 * N) * cfg.tol_abs + cfg.tol_rel * max(
            np.sqrt(np.sum(Mx ** 2) + 2 * np.sum(x ** 2)),
            np.sqrt(np.sum(r ** 2) + np.sum(s ** 2) + np.sum(t ** 2)),
        )
        eps_dual = np.sqrt(N) * cfg.tol_abs + cfg.tol_rel * rho * np.linalg.norm(M.T @ u_r + u_s + u_t)

        group_norms = np.linalg.norm(s.reshape(2 * P, d), axis=1)
        diagnostics.objective_trace.append(loss_value(problem.loss, M @ s, y) + beta * float(np.sum(group_norms)))
        diagnostics.iterations = it
        diagnostics.primal_residual = float(primal)
        diagnostics.dual_residual = float(dual)

        if it % cfg.log_every == 0:
            logger.debug(f"ADMM iter {it}: primal {primal:.3e}, dual {dual:.3e}, rho {rho:.3g}")

        if primal <= eps_primal and dual <= eps_dual:
            residuals_met = True
            break

        if cfg.polish and it % cfg.polish_every == 0:
            attempt = _try_polish(problem, _final_solution(s, X, signs, P, d), cfg)
            if attempt is not None and _certified(attempt[2], cfg):
                polished = attempt
                break

        if primal > cfg.balance_ratio * dual:
            rho *= cfg.balance_factor
            u_r /= cfg.balance_factor
            u_s /= cfg.balance_factor
            u_t /= cfg.balance_factor
        elif dual > cfg.balance_ratio * primal:
            rho /= cfg.balance_factor
            u_r *= cfg.balance_factor
            u_s *= cfg.balance_factor
            u_t *= cfg.balance_factor

    sol = _final_solution(s, X, signs, P, d)
    loss_dual = -rho * u_r
    if residuals_met and cfg.polish:
        polished = _try_polish(problem, sol, cfg)

    cert = dual_certificate(problem, sol, probe_count=0, loss_dual=loss_dual)
    if polished is not None and (polished[2].valid, -polished[2].certified_gap) >= (cert.valid, -cert.certified_gap):
        sol, loss_dual, cert = polished

    diagnostics.rho = rho
    diagnostics.loss_dual = loss_dual
    diagnostics.certified_gap = cert.certified_gap
    diagnostics.converged = cert.valid and (residuals_met or (polished is not None and _certified(cert, cfg)))
    diagnostics.wall_ms = 1000.0 * (time.perf_counter() - start)
    if diagnostics.converged:
        logger.info(f"ADMM converged in {diagnostics.iterations} iterations, objective {cert.primal_value:.10g}, "
                    f"certified gap {cert.certified_gap:.3e}")
    elif residuals_met:
        logger.warning(f"ADMM residuals met tolerance after {diagnostics.iterations} iterations but the "
                       f"certificate is invalid (dual constraint {cert.max_constraint:.8g} > beta={beta:.8g})")
    else:
        logger.warning(f"ADMM stopped at max_iter={cfg.max_iter} (primal {diagnostics.primal_residual:.3e}, "
                       f"dual {diagnostics.dual_residual:.3e})")
    return sol, diagnostics


def complex_soft_threshold(z: np.ndarray, tau: float) -> np.ndarray:
    """Shrink each complex entry's modulus by ``tau``"""
    modulus = np.abs(z)
    factor = np.where(modulus > tau, 1.0 - tau / np.where(modulus > 0, modulus, 1.0), 0.0)
    return factor * z


def _complex_lasso_value(A: np.ndarray, y: np.ndarray, lam: float, z: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(A @ z - y) ** 2)) + lam * float(np.sum(np.abs(z)))


def fista_complex_lasso(A, y, lam: float, cfg: SolverConfig) -> Tuple[np.ndarray, SolverDiagnostics]:
    """
    ``min_z 0.5 ||A z - y||^2 + lam * sum_k |z_k|`` over complex ``z``.

    Monotone FISTA: a step that raises the objective is replaced by a plain
    proximal step and the momentum is reset.
    """
    start = time.perf_counter()
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or not np.all(np.isfinite(A)):
        raise ShapeError("A must be a finite 2-D array")
    y = np.asarray(y, dtype=complex)
    if y.shape != (A.shape[0],):
        raise ShapeError(f"A has {A.shape[0]} rows but y has shape {y.shape}")
    if lam < 0:
        raise ShapeError(f"lambda must be nonnegative, got {lam}")

    L = float(np.linalg.norm(A, 2)) ** 2
    z = np.zeros(A.shape[1], dtype=complex)
    diagnostics = SolverDiagnostics()
    if L == 0.0:
        diagnostics.converged = True
        diagnostics.primal_residual = diagnostics.dual_residual = 0.0
        diagnostics.objective_trace.append(_complex_lasso_value(A, y, lam, z))
        return z, diagnostics

    def prox_step(point: np.ndarray) -> np.ndarray:
        return complex_soft_threshold(point - A.conj().T @ (A @ point - y) / L, lam / L)

    scale = max(1.0, float(np.linalg.norm(A.conj().T @ y)))
    momentum_point = z.copy()
    t_k = 1.0
    value = _complex_lasso_value(A, y, lam, z)
    for it in range(1, cfg.max_iter + 1):
        candidate = prox_step(momentum_point)
        candidate_value = _complex_lasso_value(A, y, lam, candidate)
        if candidate_value > value:
            candidate = prox_step(z)
            candidate_value = _complex_lasso_value(A, y, lam, candidate)
            t_k = 1.0
            momentum_point = candidate.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k ** 2))
            momentum_point = candidate + ((t_k - 1.0) / t_next) * (candidate - z)
            t_k = t_next
        z, value = candidate, candidate_value

        residual = L * float(np.linalg.norm(z - prox_step(z)))
        diagnostics.objective_trace.append(value)
        diagnostics.iterations = it
        diagnostics.primal_residual = residual
        diagnostics.dual_residual = 0.0
        if residual <= cfg.tol_abs + cfg.tol_rel * scale:
            diagnostics.converged = True
            break

    diagnostics.wall_ms = 1000.0 * (time.perf_counter() - start)
    if not diagnostics.converged:
        logger.warning(f"FISTA stopped at max_iter={cfg.max_iter} (residual {diagnostics.primal_residual:.3e})")
    return z, diagnostics


def svt(Z, tau: float) -> np.ndarray:
    """Singular value thresholding, the prox of ``tau * ||.||_*``"""
    Z = as_matrix(Z, "Z")
    if tau < 0:
        raise ShapeError(f"tau must be nonnegative, got {tau}")
    left, sigma, right_t = np.linalg.svd(Z, full_matrices=False)
    return (left * np.maximum(sigma - tau, 0.0)) @ right_t


def _patch_list(Xs: Union[Sequence[np.ndarray], Any]) -> List[np.ndarray]:
    patches = getattr(Xs, "patches", Xs)
    patches = [as_matrix(Xk, "patch matrix") for Xk in patches]
    if not patches:
        raise ShapeError("At least one patch matrix is required")
    if any(Xk.shape != patches[0].shape for Xk in patches):
        raise ShapeError("All patch matrices must share the same shape")
    return patches


def nuclear_objective(Xs, y, beta: float, Z: np.ndarray) -> float:
    patches = _patch_list(Xs)
    prediction = sum(Xk @ Z[:, k] for k, Xk in enumerate(patches))
    return 0.5 * float(np.sum((prediction - y) ** 2)) + beta * float(np.sum(np.linalg.svd(Z, compute_uv=False)))


def solve_nuclear(Xs, y, beta: float, cfg: SolverConfig) -> Tuple[np.ndarray, SolverDiagnostics]:
    """
    ``min_Z 0.5 ||sum_k X_k z_k - y||^2 + beta ||Z||_*`` with ``Z = [z_1 ... z_K]``.

    Accelerated proximal gradient with step ``1/L``, ``L = sigma_max([X_1 ... X_K])^2``.
    """
    start = time.perf_counter()
    patches = _patch_list(Xs)
    y = as_vector(y, "y")
    n, d = patches[0].shape
    K = len(patches)
    if y.shape[0] != n:
        raise ShapeError(f"Patch matrices have {n} rows but y has length {y.shape[0]}")
    if beta < 0:
        raise ShapeError(f"beta must be nonnegative, got {beta}")

    stacked = np.hstack(patches)
    L = power_sigma_max(stacked, seed=cfg.seed) ** 2
    Z = np.zeros((d, K))
    diagnostics = SolverDiagnostics()
    if L == 0.0:
        diagnostics.converged = True
        diagnostics.primal_residual = diagnostics.dual_residual = 0.0
        diagnostics.objective_trace.append(0.5 * float(y @ y))
        return Z, diagnostics

    def gradient(W: np.ndarray) -> np.ndarray:
        residual = stacked @ W.T.ravel() - y
        return (stacked.T @ residual).reshape(K, d).T

    def value(W: np.ndarray) -> float:
        residual = stacked @ W.T.ravel() - y
        return 0.5 * float(residual @ residual) + beta * float(np.sum(np.linalg.svd(W, compute_uv=False)))

    scale = max(1.0, float(np.linalg.norm(stacked.T @ y)))
    momentum_point = Z.copy()
    t_k = 1.0
    current = value(Z)
    for it in range(1, cfg.max_iter + 1):
        candidate = svt(momentum_point - gradient(momentum_point) / L, beta / L)
        candidate_value = value(candidate)
        if candidate_value > current:
            candidate = svt(Z - gradient(Z) / L, beta / L)
            candidate_value = value(candidate)
            t_k = 1.0
            momentum_point = candidate.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k ** 2))
            momentum_point = candidate + ((t_k - 1.0) / t_next) * (candidate - Z)
            t_k = t_next
        Z, current = candidate, candidate_value

        residual = L * float(np.linalg.norm(Z - svt(Z - gradient(Z) / L, beta / L)))
        diagnostics.objective_trace.append(current)
        diagnostics.iterations = it
        diagnostics.primal_residual = residual
        diagnostics.dual_residual = 0.0
        if it % cfg.log_every == 0:
            logger.debug(f"Nuclear prox-grad iter {it}: objective {current:.10g}, residual {residual:.3e}")
        if residual <= cfg.tol_abs + cfg.tol_rel * scale:
            diagnostics.converged = True
            break

    diagnostics.wall_ms = 1000.0 * (time.perf_counter() - start)
    if diagnostics.converged:
        logger.info(f"Nuclear solve converged in {diagnostics.iterations} iterations, objective {current:.10g}")
    else:
        logger.warning(f"Nuclear solve stopped at max_iter={cfg.max_iter} (residual {diagnostics.primal_residual:.3e})")
    return Z, diagnostics
