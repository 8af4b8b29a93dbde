"""Slow, obviously-correct reference implementations used to cross-check the solvers."""
import itertools

import numpy as np


def active_set_nnls(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exhaustive NNLS: best feasible unconstrained fit over every support set"""
    n = A.shape[1]
    best, best_value = np.zeros(n), float(np.sum(b ** 2))
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            cols = list(support)
            coef = np.linalg.lstsq(A[:, cols], b, rcond=None)[0]
            if np.any(coef < 0):
                continue
            x = np.zeros(n)
            x[cols] = coef
            value = float(np.sum((A @ x - b) ** 2))
            if value < best_value - 1e-14:
                best, best_value = x, value
    return best


def cone_projection_bruteforce(x: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Closest feasible point among projections onto every face span of ``{z : A z >= 0}``"""
    best = None
    best_dist = np.inf
    m = A.shape[0]
    for size in range(0, m + 1):
        for rows in itertools.combinations(range(m), size):
            if size:
                As = A[list(rows)]
                z = x - As.T @ np.linalg.pinv(As @ As.T) @ (As @ x)
            else:
                z = x.copy()
            if np.all(A @ z >= -1e-10):
                dist = float(np.linalg.norm(z - x))
                if dist < best_dist:
                    best, best_dist = z, dist
    return best


def naive_dft(X: np.ndarray) -> np.ndarray:
    d = X.shape[1]
    j, k = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    F = np.exp(-2j * np.pi * j * k / d)
    return X @ F


def cd_lasso(A: np.ndarray, y: np.ndarray, lam: float, sweeps: int = 20000, tol: float = 1e-15) -> np.ndarray:
    """Cyclic coordinate descent for the real lasso"""
    z = np.zeros(A.shape[1])
    col_sq = np.sum(A ** 2, axis=0)
    residual = y.copy()
    for _ in range(sweeps):
        largest = 0.0
        for j in range(A.shape[1]):
            rho = A[:, j] @ residual + col_sq[j] * z[j]
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            if new != z[j]:
                residual -= A[:, j] * (new - z[j])
                largest = max(largest, abs(new - z[j]))
                z[j] = new
        if largest < tol:
            break
    return z


def group_lasso_single(A: np.ndarray, y: np.ndarray, beta: float, iters: int = 200000) -> np.ndarray:
    """``min 0.5 ||A v - y||^2 + beta ||v||`` by proximal gradient"""
    L = np.linalg.norm(A, 2) ** 2
    v = np.zeros(A.shape[1])
    for _ in range(iters):
        g = v - A.T @ (A @ v - y) / L
        norm = np.linalg.norm(g)
        new = np.zeros_like(g) if norm <= beta / L else (1 - beta / (L * norm)) * g
        if np.linalg.norm(new - v) < 1e-15:
            return new
        v = new
    return v


def time_domain_circulant(X: np.ndarray, y: np.ndarray, penalty: float, rho: float = 1.0,
                          iters: int = 200000) -> np.ndarray:
    """
    ``min_w 0.5 ||X w - y||^2 + penalty * ||F w||_1`` over real ``w`` by ADMM on ``s = F w``.
    """
    d = X.shape[1]
    system = X.T @ X + rho * d * np.eye(d)
    w = np.zeros(d)
    s = np.zeros(d, dtype=complex)
    u = np.zeros(d, dtype=complex)
    for _ in range(iters):
        # F^H v = d * ifft(v)
        rhs = X.T @ y + rho * np.real(d * np.fft.ifft(s - u))
        w = np.linalg.solve(system, rhs)
        Fw = np.fft.fft(w)
        a = Fw + u
        modulus = np.abs(a)
        shrink = np.where(modulus > penalty / rho, 1 - (penalty / rho) / np.where(modulus > 0, modulus, 1), 0)
        s_old = s
        s = shrink * a
        u = u + Fw - s
        if np.linalg.norm(Fw - s) < 1e-13 and rho * np.linalg.norm(s - s_old) < 1e-13:
            break
    return w


def angular_sweep_patterns(X: np.ndarray, count: int = 100000) -> set:
    """Activation patterns of 2-D data over a fine grid of directions"""
    angles = np.linspace(0.0, 2 * np.pi, count, endpoint=False) + 1e-7
    U = np.vstack([np.cos(angles), np.sin(angles)])
    masks = (X @ U >= 0).T
    return {tuple(bool(b) for b in row) for row in np.unique(masks, axis=0)}
