# src/core/baseline.py
"""
Nonconvex baselines trained with plain minibatch (sub)gradient descent.

The minibatch loss is scaled by ``n / |B|`` so each step estimates the gradient
of the full regularized objective. The ReLU derivative at 0 is taken as 0.
"""
import time
import logging
from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from .errors import ConfigError, ShapeError
from .network import TwoLayerReLUNet, nonconvex_cost
from .numerics import as_matrix, as_vector
from .program import LossKind

logger = logging.getLogger(__name__)

RELU_GRAD_AT_ZERO = 0.0
DIVERGENCE_THRESHOLD = 1e12


def relu_subgradient_convention() -> float:
    """Value used for the derivative of ``(t)_+`` at ``t = 0``"""
    return RELU_GRAD_AT_ZERO


def relu_derivative(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.where(t > 0.0, 1.0, np.where(t < 0.0, 0.0, RELU_GRAD_AT_ZERO))


class TrainConfig(BaseModel):
    learning_rate: float = Field(0.001, ge=0)
    batch_size: int = Field(5, ge=1)
    epochs: int = Field(2000, ge=1)
    seed: int = 0
    loss: LossKind = LossKind.SQUARED
    beta: float = Field(0.001, ge=0)
    m: int = Field(8, ge=1)
    init_scale: float = Field(0.5, gt=0)

    @classmethod
    def from_mapping(cls, data: Optional[Dict[str, Any]]) -> "TrainConfig":
        try:
            return cls(**(data or {}))
        except ValidationError as e:
            raise ConfigError(f"Invalid SGD config: {e}") from e


@dataclass
class TrainTrace:
    """Full-dataset objective after every epoch; entry 0 is the initial point"""
    objective: List[float] = field(default_factory=list)
    wall_ms: List[float] = field(default_factory=list)
    diverged: bool = False

    @property
    def final(self) -> float:
        return self.objective[-1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epoch": np.arange(len(self.objective)),
            "objective": self.objective,
            "wall_ms": self.wall_ms,
        })


def init_gaussian(d: int, m: int, seed: int = 0, scale: float = 0.5) -> TwoLayerReLUNet:
    if scale <= 0:
        raise ConfigError(f"Initialization scale must be positive, got {scale}")
    if d < 1 or m < 1:
        raise ShapeError(f"init_gaussian needs d >= 1 and m >= 1, got d={d}, m={m}")
    rng = np.random.default_rng(seed)
    U = scale * rng.standard_normal((d, m))
    alpha = scale * rng.standard_normal(m)
    return TwoLayerReLUNet(U, alpha)


def _loss_gradient(prediction: np.ndarray, y: np.ndarray, loss: LossKind) -> np.ndarray:
    if loss is LossKind.SQUARED:
        return prediction - y
    # hinge subgradient taken as 0 at the kink
    return np.where(1.0 - y * prediction > 0.0, -y, 0.0)


def minibatch_gradient(U: np.ndarray, alpha: np.ndarray, Xb: np.ndarray, yb: np.ndarray, beta: float,
                       loss: LossKind, loss_scale: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of ``loss_scale * loss(f(Xb), yb) + (beta/2)(||U||^2 + ||alpha||^2)``"""
    pre = Xb @ U
    hidden = np.maximum(pre, 0.0)
    g = loss_scale * _loss_gradient(hidden @ alpha, yb, LossKind(loss))
    grad_alpha = hidden.T @ g + beta * alpha
    grad_U = Xb.T @ (np.outer(g, alpha) * relu_derivative(pre)) + beta * U
    return grad_U, grad_alpha


def minibatch_objective(U: np.ndarray, alpha: np.ndarray, Xb: np.ndarray, yb: np.ndarray, beta: float,
                        loss: LossKind, loss_scale: float = 1.0) -> float:
    net = TwoLayerReLUNet(U, alpha)
    return nonconvex_cost(net, Xb, yb, 0.0, loss) * loss_scale + 0.5 * beta * (
        float(np.sum(U ** 2)) + float(np.sum(alpha ** 2)))


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_sgd(X, y, cfg: TrainConfig,
              net: Optional[TwoLayerReLUNet] = None) -> Tuple[TwoLayerReLUNet, TrainTrace]:
    """Minibatch subgradient descent on the weight-decayed two-layer objective"""
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    n, d = X.shape
    if y.shape[0] != n:
        raise ShapeError(f"X has {n} rows but y has length {y.shape[0]}")
    if cfg.batch_size > n:
        raise ConfigError(f"batch_size={cfg.batch_size} exceeds the number of samples n={n}")
    if net is None:
        net = init_gaussian(d, cfg.m, cfg.seed, cfg.init_scale)
    U, alpha = net.U.copy(), net.alpha.copy()
    rng = np.random.default_rng([cfg.seed, 1])
    loss = LossKind(cfg.loss)

    start = time.perf_counter()
    trace = TrainTrace()
    trace.objective.append(nonconvex_cost(TwoLayerReLUNet(U, alpha), X, y, cfg.beta, loss))
    trace.wall_ms.append(0.0)
    for epoch in range(1, cfg.epochs + 1):
        last_U, last_alpha = U.copy(), alpha.copy()
        for batch in _batches(n, cfg.batch_size, rng):
            grad_U, grad_alpha = minibatch_gradient(U, alpha, X[batch], y[batch], cfg.beta, loss, n / len(batch))
            U -= cfg.learning_rate * grad_U
            alpha -= cfg.learning_rate * grad_alpha
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(alpha))):
            trace.diverged = True
            U, alpha = last_U, last_alpha
            logger.warning(f"SGD (seed {cfg.seed}) produced non-finite weights at epoch {epoch}; stopping")
            break
        value = nonconvex_cost(TwoLayerReLUNet(U, alpha), X, y, cfg.beta, loss)
        trace.objective.append(value)
        trace.wall_ms.append(1000.0 * (time.perf_counter() - start))
        if value > DIVERGENCE_THRESHOLD:
            trace.diverged = True
            logger.warning(f"SGD (seed {cfg.seed}) diverged at epoch {epoch}: objective {value:.3e}")
            break

    logger.info(f"SGD (seed {cfg.seed}, m={cfg.m}) final objective {trace.final:.10g}")
    return TwoLayerReLUNet(U, alpha), trace


@dataclass
class LinearCNN:
    """``f = sum_j sum_k (X_k u_j) A[k, j]``; ``U`` holds filters as columns"""
    U: np.ndarray
    A: np.ndarray

    def effective(self) -> np.ndarray:
        """``Z = U A^T`` whose column ``k`` multiplies patch matrix ``X_k``"""
        return self.U @ self.A.T


def linear_cnn_cost(model: LinearCNN, patches: List[np.ndarray], y: np.ndarray, beta: float) -> float:
    Z = model.effective()
    prediction = sum(Xk @ Z[:, k] for k, Xk in enumerate(patches))
    return 0.5 * float(np.sum((prediction - y) ** 2)) + 0.5 * beta * (
        float(np.sum(model.U ** 2)) + float(np.sum(model.A ** 2)))


def train_linear_cnn_gd(Xs, y, cfg: TrainConfig) -> Tuple[LinearCNN, TrainTrace]:
    """Minibatch gradient descent on the weight-decayed linear CNN with ``cfg.m`` filters"""
    patches = [as_matrix(Xk, "patch matrix") for Xk in getattr(Xs, "patches", Xs)]
    y = as_vector(y, "y")
    if not patches:
        raise ShapeError("At least one patch matrix is required")
    n, d = patches[0].shape
    K = len(patches)
    if y.shape[0] != n:
        raise ShapeError(f"Patch matrices have {n} rows but y has length {y.shape[0]}")
    if cfg.batch_size > n:
        raise ConfigError(f"batch_size={cfg.batch_size} exceeds the number of samples n={n}")
    if LossKind(cfg.loss) is not LossKind.SQUARED:
        raise ConfigError("The linear CNN baseline supports squared loss only")

    rng = np.random.default_rng(cfg.seed)
    model = LinearCNN(cfg.init_scale * rng.standard_normal((d, cfg.m)),
                      cfg.init_scale * rng.standard_normal((K, cfg.m)))
    shuffle = np.random.default_rng([cfg.seed, 1])
    stacked = np.stack(patches)

    start = time.perf_counter()
    trace = TrainTrace()
    trace.objective.append(linear_cnn_cost(model, patches, y, cfg.beta))
    trace.wall_ms.append(0.0)
    for epoch in range(1, cfg.epochs + 1):
        for batch in _batches(n, cfg.batch_size, shuffle):
            Xb = stacked[:, batch, :]
            Z = model.effective()
            residual = (n / len(batch)) * (np.einsum("kbd,dk->b", Xb, Z) - y[batch])
            grad_Z = np.einsum("kbd,b->dk", Xb, residual)
            grad_U = grad_Z @ model.A + cfg.beta * model.U
            grad_A = grad_Z.T @ model.U + cfg.beta * model.A
            model.U -= cfg.learning_rate * grad_U
            model.A -= cfg.learning_rate * grad_A
        value = linear_cnn_cost(model, patches, y, cfg.beta)
        trace.objective.append(value)
        trace.wall_ms.append(1000.0 * (time.perf_counter() - start))
        if not np.isfinite(value) or value > DIVERGENCE_THRESHOLD:
            trace.diverged = True
            logger.warning(f"Linear CNN GD (seed {cfg.seed}) diverged at epoch {epoch}")
            break
    logger.info(f"Linear CNN GD (seed {cfg.seed}, m={cfg.m}) final objective {trace.final:.10g}")
    return model, trace


@dataclass
class CircularCNN:
    """
    ``f = sum_j X circ(u_j) alpha_j``: filters ``u_j`` and weights ``alpha_j`` are the
    columns of ``U`` and ``A``; filter entries past the filter length stay zero.
    """
    U: np.ndarray
    A: np.ndarray

    def effective(self) -> np.ndarray:
        """``w = sum_j u_j * alpha_j`` (circular convolution), so ``f = X w``"""
        spectra = np.fft.fft(self.U, axis=0) * np.fft.fft(self.A, axis=0)
        return np.real(np.fft.ifft(spectra, axis=0)).sum(axis=1)


def circular_cnn_cost(model: CircularCNN, X: np.ndarray, y: np.ndarray, beta: float) -> float:
    residual = X @ model.effective() - y
    return 0.5 * float(np.sum(residual ** 2)) + 0.5 * beta * (
        float(np.sum(model.U ** 2)) + float(np.sum(model.A ** 2)))


def train_circular_cnn_gd(X, y, cfg: TrainConfig,
                          filter_len: Optional[int] = None) -> Tuple[CircularCNN, TrainTrace]:
    """Minibatch gradient descent on the weight-decayed circular CNN with ``cfg.m`` channels"""
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    n, d = X.shape
    h = d if filter_len is None else int(filter_len)
    if not 1 <= h <= d:
        raise ShapeError(f"Need 1 <= filter_len <= {d}, got {h}")
    if y.shape[0] != n:
        raise ShapeError(f"X has {n} rows but y has length {y.shape[0]}")
    if cfg.batch_size > n:
        raise ConfigError(f"batch_size={cfg.batch_size} exceeds the number of samples n={n}")
    if LossKind(cfg.loss) is not LossKind.SQUARED:
        raise ConfigError("The circular CNN baseline supports squared loss only")

    rng = np.random.default_rng(cfg.seed)
    model = CircularCNN(cfg.init_scale * rng.standard_normal((d, cfg.m)),
                        cfg.init_scale * rng.standard_normal((d, cfg.m)))
    model.U[h:] = 0.0
    shuffle = np.random.default_rng([cfg.seed, 1])

    start = time.perf_counter()
    trace = TrainTrace()
    trace.objective.append(circular_cnn_cost(model, X, y, cfg.beta))
    trace.wall_ms.append(0.0)
    for epoch in range(1, cfg.epochs + 1):
        for batch in _batches(n, cfg.batch_size, shuffle):
            Xb = X[batch]
            residual = (n / len(batch)) * (Xb @ model.effective() - y[batch])
            spectrum = np.fft.fft(Xb.T @ residual)[:, None]
            # gradient of <g, u * a> in u is the circular cross-correlation of g with a
            grad_U = np.real(np.fft.ifft(spectrum * np.conj(np.fft.fft(model.A, axis=0)), axis=0))
            grad_A = np.real(np.fft.ifft(spectrum * np.conj(np.fft.fft(model.U, axis=0)), axis=0))
            grad_U += cfg.beta * model.U
            grad_A += cfg.beta * model.A
            grad_U[h:] = 0.0
            model.U -= cfg.learning_rate * grad_U
            model.A -= cfg.learning_rate * grad_A
        value = circular_cnn_cost(model, X, y, cfg.beta)
        trace.objective.append(value)
        trace.wall_ms.append(1000.0 * (time.perf_counter() - start))
        if not np.isfinite(value) or value > DIVERGENCE_THRESHOLD:
            trace.diverged = True
            logger.warning(f"Circular CNN GD (seed {cfg.seed}) diverged at epoch {epoch}")
            break
    logger.info(f"Circular CNN GD (seed {cfg.seed}, m={cfg.m}, filter_len={h}) final objective {trace.final:.10g}")
    return model, trace
