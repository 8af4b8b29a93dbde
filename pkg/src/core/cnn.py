# src/core/cnn.py
"""
Convolutional reductions: patch extraction, the separable ReLU stacking, the
nuclear-norm program for linear CNNs and the Fourier-domain lasso for
circular CNNs.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .baseline import CircularCNN
from .errors import GeometryError, ShapeError
from .numerics import as_matrix, as_vector, dft_matrix_apply, power_sigma_max
from .solvers import SolverConfig, SolverDiagnostics, fista_complex_lasso, nuclear_objective, solve_nuclear

logger = logging.getLogger(__name__)

DFT_NORMS = ("backward", "ortho")


@dataclass
class PatchSet:
    patches: List[np.ndarray]

    def __post_init__(self):
        self.patches = [as_matrix(Xk, "patch matrix") for Xk in self.patches]
        if not self.patches:
            raise ShapeError("A PatchSet needs at least one patch matrix")
        shape = self.patches[0].shape
        for k, Xk in enumerate(self.patches):
            if Xk.shape != shape:
                raise ShapeError(f"Patch {k} has shape {Xk.shape}, expected {shape}")

    @property
    def K(self) -> int:
        return len(self.patches)

    @property
    def n(self) -> int:
        return self.patches[0].shape[0]

    @property
    def d(self) -> int:
        return self.patches[0].shape[1]

    def stacked(self) -> np.ndarray:
        """``[X_1 ... X_K]`` side by side"""
        return np.hstack(self.patches)


@dataclass
class CirculantSpec:
    """Filters of length ``filter_len`` zero-padded to ``signal_len`` before the circular embedding"""
    filter_len: int
    signal_len: int
    dft_norm: str = "backward"
    penalty_scale: Optional[float] = None

    def __post_init__(self):
        if not 1 <= self.filter_len <= self.signal_len:
            raise ShapeError(f"Need 1 <= filter_len <= signal_len, got {self.filter_len} and {self.signal_len}")
        if self.dft_norm not in DFT_NORMS:
            raise ShapeError(f"dft_norm must be one of {DFT_NORMS}, got {self.dft_norm!r}")
        if self.penalty_scale is not None and self.penalty_scale < 0:
            raise ShapeError(f"penalty_scale must be nonnegative, got {self.penalty_scale}")

    @property
    def is_relaxation(self) -> bool:
        return self.filter_len < self.signal_len

    def penalty(self, beta: float) -> float:
        """Penalty on ``||z||_1`` matching ``dft_norm``: ``beta`` unnormalized, ``beta / sqrt(d)`` unitary"""
        if self.penalty_scale is not None:
            return self.penalty_scale * beta
        if self.dft_norm == "ortho":
            return beta / np.sqrt(self.signal_len)
        return beta


def extract_patches(images, height: int, width: int, channels: int, filter_h: int, filter_w: int,
                    stride: int) -> PatchSet:
    """
    Patch matrices of flattened ``(channels, height, width)`` images.

    Patch positions are ordered row-major; each patch is flattened channel-major.
    """
    images = as_matrix(images, "images")
    n = images.shape[0]
    expected_cols = channels * height * width
    if images.shape[1] != expected_cols:
        raise GeometryError("Flattened image length does not match the geometry",
                            expected=expected_cols, actual=images.shape[1])
    if stride < 1 or filter_h < 1 or filter_w < 1:
        raise GeometryError("Filter sizes and stride must be positive",
                            expected=">= 1", actual=(filter_h, filter_w, stride))
    if filter_h > height or filter_w > width:
        raise GeometryError("Filter is larger than the image",
                            expected=f"<= {(height, width)}", actual=(filter_h, filter_w))
    if (height - filter_h) % stride or (width - filter_w) % stride:
        raise GeometryError("Stride does not tile the image without partial patches",
                            expected="(size - filter) divisible by stride",
                            actual=((height - filter_h) % stride, (width - filter_w) % stride))

    cube = images.reshape(n, channels, height, width)
    rows = (height - filter_h) // stride + 1
    cols = (width - filter_w) // stride + 1
    patches = []
    for r in range(rows):
        for c in range(cols):
            block = cube[:, :, r * stride:r * stride + filter_h, c * stride:c * stride + filter_w]
            patches.append(block.reshape(n, channels * filter_h * filter_w))
    return PatchSet(patches)


def stack_separable(ps: PatchSet, y_blocks: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """``X' = [X_1; ...; X_K]`` and ``y' = [y_1; ...; y_K]``"""
    if len(y_blocks) != ps.K:
        raise ShapeError(f"Got {len(y_blocks)} label blocks for {ps.K} patches")
    blocks = [as_vector(yk, "label block") for yk in y_blocks]
    for k, yk in enumerate(blocks):
        if yk.shape[0] != ps.n:
            raise ShapeError(f"Label block {k} has length {yk.shape[0]}, expected {ps.n}")
    return np.vstack(ps.patches), np.concatenate(blocks)


def sdp_constraint(ps: PatchSet, v) -> float:
    """``sigma_max([X_1^T v ... X_K^T v])``"""
    v = as_vector(v, "v")
    return power_sigma_max(np.column_stack([Xk.T @ v for Xk in ps.patches]))


def nuclear_duality_gap(ps: PatchSet, y, beta: float, Z: np.ndarray) -> Tuple[float, float]:
    """
    Gap between the nuclear-norm objective at ``Z`` and the dual value of
    ``v = y - sum_k X_k z_k`` scaled into ``sigma_max([X_k^T v]) <= beta``.

    Returns ``(gap, dual_value)``.
    """
    y = as_vector(y, "y")
    residual = y - sum(Xk @ Z[:, k] for k, Xk in enumerate(ps.patches))
    constraint = sdp_constraint(ps, residual)
    scale = 1.0 if constraint <= beta or constraint == 0.0 else beta / constraint
    v = scale * residual
    dual = -0.5 * float(np.sum((v - y) ** 2)) + 0.5 * float(y @ y)
    return nuclear_objective(ps, y, beta, Z) - dual, dual


def train_linear_cnn(ps: PatchSet, y, beta: float, cfg: SolverConfig) -> Tuple[np.ndarray, SolverDiagnostics, float]:
    """Nuclear-norm training; ``sdp_check`` is the dual constraint value at the residual"""
    y = as_vector(y, "y")
    Z, diagnostics = solve_nuclear(ps, y, beta, cfg)
    residual = y - sum(Xk @ Z[:, k] for k, Xk in enumerate(ps.patches))
    sdp_check = sdp_constraint(ps, residual)
    if sdp_check > beta * (1.0 + 1e-6):
        logger.warning(f"SDP constraint {sdp_check:.8g} exceeds beta={beta:.8g}")
    return Z, diagnostics, sdp_check


def circulant_features(X, spec: CirculantSpec) -> np.ndarray:
    X = as_matrix(X, "X")
    if X.shape[1] != spec.signal_len:
        raise ShapeError(f"X has {X.shape[1]} columns, CirculantSpec expects {spec.signal_len}")
    if spec.dft_norm == "backward":
        return dft_matrix_apply(X)
    return np.fft.fft(X, axis=1, norm="ortho")


def train_circular_cnn(X, y, beta: float, spec: CirculantSpec,
                       cfg: SolverConfig) -> Tuple[np.ndarray, float, SolverDiagnostics]:
    """
    Fourier-domain lasso ``min_z 0.5 ||X~ z - y||^2 + penalty * ||z||_1``.

    When ``filter_len < signal_len`` its value lower-bounds the circular CNN
    with short filters.
    """
    y = as_vector(y, "y")
    features = circulant_features(X, spec)
    lam = spec.penalty(beta)
    z, diagnostics = fista_complex_lasso(features, y, lam, cfg)
    value = 0.5 * float(np.sum(np.abs(features @ z - y) ** 2)) + lam * float(np.sum(np.abs(z)))
    if spec.is_relaxation:
        logger.info(f"filter_len {spec.filter_len} < signal_len {spec.signal_len}: value {value:.10g} is a lower bound")
    return z, value, diagnostics


def recover_filter(z, spec: Optional[CirculantSpec] = None) -> np.ndarray:
    """Real time-domain effective filter ``w`` with ``X w = X~ z``"""
    z = np.asarray(z, dtype=complex)
    norm = spec.dft_norm if spec is not None else "backward"
    return np.real(np.fft.fft(z, norm=norm))


def circular_factorization(w) -> CircularCNN:
    """
    Circular CNN realizing the effective filter ``w`` at the smallest weight decay.

    One real channel per conjugate frequency pair ``(k, d - k)``, with
    ``|u^_k| = |alpha^_k| = sqrt(|w^_k|)``; its penalty ``(||U||^2 + ||A||^2) / 2``
    equals ``||fft(w)||_1 / d``.
    """
    w = as_vector(w, "w")
    d = w.shape[0]
    spectrum = np.fft.fft(w)
    m = d // 2 + 1
    U = np.zeros((d, m))
    A = np.zeros((d, m))
    for k in range(m):
        magnitude = abs(spectrum[k])
        if magnitude == 0.0:
            continue
        u_hat = np.zeros(d, dtype=complex)
        a_hat = np.zeros(d, dtype=complex)
        u_hat[k] = np.sqrt(magnitude) * spectrum[k] / magnitude
        a_hat[k] = np.sqrt(magnitude)
        u_hat[(d - k) % d] = np.conj(u_hat[k])
        a_hat[(d - k) % d] = np.conj(a_hat[k])
        U[:, k] = np.real(np.fft.ifft(u_hat))
        A[:, k] = np.real(np.fft.ifft(a_hat))
    return CircularCNN(U, A)


def filter_distance(Z_a, Z_b) -> float:
    """Relative Frobenius distance between two effective filter matrices"""
    Z_a = as_matrix(Z_a, "Z_a")
    Z_b = as_matrix(Z_b, "Z_b")
    if Z_a.shape != Z_b.shape:
        raise ShapeError(f"Filter matrices differ in shape: {Z_a.shape} vs {Z_b.shape}")
    reference = max(float(np.linalg.norm(Z_b)), np.finfo(float).tiny)
    return float(np.linalg.norm(Z_a - Z_b)) / reference
