# src/core/network.py
"""
The two-layer ReLU network ``f(x) = sum_j (x^T u_j)_+ alpha_j`` and its
relationship to the convex program: reconstruction of optimal neurons,
colinear merging, balanced rescaling and suboptimality bounds.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Any, List, Optional

import numpy as np

from .arrangements import ArrangementSet
from .errors import CertificateError, ShapeError
from .numerics import as_matrix, as_vector
from .program import ConvexTrainingProblem, DualCertificate, GroupSolution, LossKind, loss_value

logger = logging.getLogger(__name__)

NEURON_REL_TOL = 1e-10


@dataclass
class TwoLayerReLUNet:
    U: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.U = as_matrix(self.U, "U")
        self.alpha = as_vector(self.alpha, "alpha")
        if self.U.shape[1] != self.alpha.shape[0]:
            raise ShapeError(f"U has {self.U.shape[1]} columns but alpha has length {self.alpha.shape[0]}")

    @classmethod
    def empty(cls, d: int) -> "TwoLayerReLUNet":
        return cls(np.zeros((d, 0)), np.zeros(0))

    @property
    def d(self) -> int:
        return self.U.shape[0]

    @property
    def m(self) -> int:
        return self.U.shape[1]

    def to_dict(self) -> Dict[str, Any]:
        return {"d": self.d, "m": self.m, "U": self.U.tolist(), "alpha": self.alpha.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TwoLayerReLUNet":
        d, m = int(data["d"]), int(data["m"])
        U = np.asarray(data["U"], dtype=float).reshape(d, m)
        alpha = np.asarray(data["alpha"], dtype=float)
        if alpha.shape != (m,):
            raise ShapeError(f"Network JSON declares m={m} but alpha has shape {alpha.shape}")
        return cls(U, alpha)


def predict(net: TwoLayerReLUNet, X) -> np.ndarray:
    X = as_matrix(X, "X")
    if X.shape[1] != net.d:
        raise ShapeError(f"X has {X.shape[1]} columns but the network expects d={net.d}")
    return np.maximum(X @ net.U, 0.0) @ net.alpha


def nonconvex_cost(net: TwoLayerReLUNet, X, y, beta: float, loss: LossKind = LossKind.SQUARED) -> float:
    """``loss(f(X), y) + (beta/2) sum_j (||u_j||^2 + alpha_j^2)``"""
    y = as_vector(y, "y")
    weight_decay = 0.5 * beta * (float(np.sum(net.U ** 2)) + float(np.sum(net.alpha ** 2)))
    return loss_value(loss, predict(net, X), y) + weight_decay


def reconstruct(sol: GroupSolution, patterns: ArrangementSet, rel_tol: float = NEURON_REL_TOL) -> TwoLayerReLUNet:
    """
    One neuron per nonzero group: ``u = v / sqrt(||v||)`` with ``alpha = sqrt(||v||)``
    for the ``v`` groups and ``alpha = -sqrt(||w||)`` for the ``w`` groups.
    """
    if sol.P != len(patterns):
        raise ShapeError(f"Solution has {sol.P} groups but there are {len(patterns)} patterns")
    d = sol.v.shape[1]
    norms = sol.group_norms()
    cutoff = rel_tol * float(np.max(norms, initial=0.0))
    columns: List[np.ndarray] = []
    alphas: List[float] = []
    for sign, groups in ((1.0, sol.v), (-1.0, sol.w)):
        for g in groups:
            norm = float(np.linalg.norm(g))
            if norm == 0.0 or norm <= cutoff:
                continue
            columns.append(g / np.sqrt(norm))
            alphas.append(sign * np.sqrt(norm))
    if not columns:
        return TwoLayerReLUNet.empty(d)
    net = TwoLayerReLUNet(np.column_stack(columns), np.array(alphas))
    logger.debug(f"Reconstructed {net.m} neurons from {sol.P} patterns")
    return net


def merge_colinear(net: TwoLayerReLUNet, tol: float = 1e-9) -> TwoLayerReLUNet:
    """
    Merge neurons whose effective directions ``v_j = |alpha_j| u_j`` are positively
    colinear and whose output weights share a sign; merged neurons are balanced.
    """
    if tol < 0:
        raise ShapeError(f"tol must be nonnegative, got {tol}")
    merged_v: List[np.ndarray] = []
    merged_sign: List[float] = []
    for j in range(net.m):
        v = abs(net.alpha[j]) * net.U[:, j]
        norm = np.linalg.norm(v)
        if norm == 0.0:
            continue
        sign = float(np.sign(net.alpha[j]))
        for k, (w, s) in enumerate(zip(merged_v, merged_sign)):
            if s == sign and (v @ w) / (norm * np.linalg.norm(w)) >= 1.0 - tol:
                merged_v[k] = w + v
                break
        else:
            merged_v.append(v)
            merged_sign.append(sign)

    if not merged_v:
        return TwoLayerReLUNet.empty(net.d)
    norms = np.array([np.linalg.norm(v) for v in merged_v])
    U = np.column_stack([v / np.sqrt(nv) for v, nv in zip(merged_v, norms)])
    alpha = np.array(merged_sign) * np.sqrt(norms)
    if len(merged_v) < net.m:
        logger.debug(f"Merged {net.m} neurons into {len(merged_v)}")
    return TwoLayerReLUNet(U, alpha)


def rescale_balanced(net: TwoLayerReLUNet) -> TwoLayerReLUNet:
    """Rescale each neuron by ``gamma_j = sqrt(|alpha_j| / ||u_j||)`` so that ``||u_j|| = |alpha_j|``"""
    U = net.U.copy()
    alpha = net.alpha.copy()
    for j in range(net.m):
        norm = np.linalg.norm(U[:, j])
        if norm == 0.0:
            if alpha[j] != 0.0:
                raise ShapeError(f"Neuron {j} has a zero hidden vector but output weight {alpha[j]}")
            continue
        if alpha[j] == 0.0:
            U[:, j] = 0.0
            continue
        gamma = np.sqrt(abs(alpha[j]) / norm)
        U[:, j] *= gamma
        alpha[j] /= gamma
    return TwoLayerReLUNet(U, alpha)


def suboptimality_gap(net: TwoLayerReLUNet, problem: ConvexTrainingProblem,
                      certificate: Optional[DualCertificate] = None) -> float:
    """Nonconvex cost of ``net`` minus the dual lower bound held by ``certificate``"""
    if certificate is None:
        raise CertificateError("No duality certificate available; solve the convex program first")
    if not certificate.valid:
        raise CertificateError("The duality certificate is invalid; solve the convex program to optimality first")
    if not certificate.exact_patterns:
        logger.warning("Certificate was built on a partial pattern set; the gap is relative to that program")
    cost = nonconvex_cost(net, problem.X, problem.y, problem.beta, problem.loss)
    return cost - certificate.dual_value


def evaluate(net: TwoLayerReLUNet, X, y, loss: LossKind = LossKind.SQUARED) -> float:
    """Mean squared error for regression, misclassification rate for hinge"""
    y = as_vector(y, "y")
    if y.size == 0:
        return float("nan")
    prediction = predict(net, X)
    if LossKind(loss) is LossKind.SQUARED:
        return float(np.mean((prediction - y) ** 2))
    labels = np.where(prediction >= 0.0, 1.0, -1.0)
    return float(np.mean(labels != y))
