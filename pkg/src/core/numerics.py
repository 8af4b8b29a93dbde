# src/core/numerics.py
"""
Dense linear-algebra and transform primitives shared by the rest of the package.

Everything here is a pure function of its inputs. Matrices are plain
``numpy.ndarray`` objects; ``as_matrix`` / ``as_vector`` are the single place
where non-finite entries are rejected.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ShapeError, ConvergenceError

RANK_TOL = 1e-10


def as_matrix(A, name: str = "matrix", dtype=float) -> np.ndarray:
    """Return ``A`` as a finite 2-D array"""
    try:
        arr = np.asarray_chkfinite(A, dtype=dtype)
    except ValueError as e:
        raise ShapeError(f"{name} contains non-finite entries") from e
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def as_vector(b, name: str = "vector", dtype=float) -> np.ndarray:
    """Return ``b`` as a finite 1-D array"""
    try:
        arr = np.asarray_chkfinite(b, dtype=dtype)
    except ValueError as e:
        raise ShapeError(f"{name} contains non-finite entries") from e
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


@dataclass
class SvdResult:
    """Thin SVD ``A = left @ diag(singular_values) @ right.T``"""
    singular_values: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def rank(self, tol: float = RANK_TOL) -> int:
        if self.singular_values.size == 0 or self.singular_values[0] == 0.0:
            return 0
        return int(np.sum(self.singular_values > tol * self.singular_values[0]))

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def svd(A) -> SvdResult:
    A = as_matrix(A, "svd input")
    if A.size == 0:
        raise ShapeError("svd input must be nonempty")
    left, sigma, right_t = np.linalg.svd(A, full_matrices=False)
    return SvdResult(singular_values=sigma, left=left, right=right_t.T)


def matrix_rank(A, tol: float = RANK_TOL) -> int:
    return svd(A).rank(tol)


def power_sigma_max(A, tol: float = 1e-10, max_iter: int = 10000, seed: int = 0) -> float:
    """Largest singular value of ``A`` by power iteration on ``A.T @ A``"""
    A = as_matrix(A, "power iteration input")
    if A.size == 0:
        raise ShapeError("power iteration input must be nonempty")
    if not np.any(A):
        return 0.0

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.shape[1])
    x /= np.linalg.norm(x)
    sigma = np.linalg.norm(A @ x)
    for it in range(1, max_iter + 1):
        z = A.T @ (A @ x)
        norm_z = np.linalg.norm(z)
        if norm_z == 0.0:
            # start vector landed in the null space
            x = rng.standard_normal(A.shape[1])
            x /= np.linalg.norm(x)
            continue
        x = z / norm_z
        sigma_next = np.linalg.norm(A @ x)
        if abs(sigma_next - sigma) <= tol * sigma_next:
            return float(sigma_next)
        sigma = sigma_next
    raise ConvergenceError(
        f"Power iteration did not converge in {max_iter} iterations (sigma ~ {sigma:.6g})",
        last_iterate=x,
        iterations=max_iter,
    )


def dft_matrix_apply(X) -> np.ndarray:
    """Row-wise unnormalized DFT, i.e. ``X @ F`` with ``F[j, k] = exp(-2i*pi*j*k/d)``"""
    X = as_matrix(X, "DFT input")
    return np.fft.fft(X, axis=1)


def inverse_dft_apply(Xc) -> np.ndarray:
    """Row-wise inverse of ``dft_matrix_apply`` (carries the 1/d factor)"""
    Xc = np.asarray(Xc, dtype=complex)
    if Xc.ndim != 2:
        raise ShapeError(f"inverse DFT input must be 2-D, got shape {Xc.shape}")
    return np.fft.ifft(Xc, axis=1)


def nnls(A, b, max_iter: Optional[int] = None, tol: Optional[float] = None) -> np.ndarray:
    """
    Nonnegative least squares ``min ||A x - b||_2 s.t. x >= 0`` (Lawson-Hanson active set).

    Raises ConvergenceError when the outer loop exceeds ``max_iter`` (default 3n).
    """
    A = as_matrix(A, "nnls matrix")
    b = as_vector(b, "nnls target")
    m, n = A.shape
    if b.shape[0] != m:
        raise ShapeError(f"nnls: A has {m} rows but b has length {b.shape[0]}")
    if max_iter is None:
        max_iter = 3 * max(n, 1)
    if tol is None:
        scale = max(1.0, float(np.max(np.abs(A), initial=0.0)) * float(np.max(np.abs(b), initial=0.0)))
        tol = 10 * np.finfo(float).eps * max(m, n) * scale

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ b
    outer = 0
    while np.any(~passive) and np.max(np.where(passive, -np.inf, w)) > tol:
        if outer >= max_iter:
            raise ConvergenceError(
                f"nnls exceeded {max_iter} active-set iterations", last_iterate=x, iterations=outer
            )
        outer += 1
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True

        s = np.zeros(n)
        s[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
        if s[j] <= 0.0:
            # w_j > tol but the new column cannot move: KKT holds to working precision
            passive[j] = False
            break

        inner = 0
        while np.any(s[passive] <= 0.0):
            inner += 1
            if inner > 3 * max(n, 1):
                raise ConvergenceError("nnls inner loop cycled", last_iterate=x, iterations=outer)
            blocking = passive & (s <= 0.0)
            step = np.min(x[blocking] / (x[blocking] - s[blocking]))
            x = x + step * (s - x)
            passive &= x > tol
            x[~passive] = 0.0
            s = np.zeros(n)
            if np.any(passive):
                s[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
        x = s
        w = A.T @ (b - A @ x)

    return x
