# src/core/arrangements.py
"""
Activation patterns of a central hyperplane arrangement.

Each pattern is the 0/1 diagonal of one matrix ``D_i = Diag(1[X u >= 0])``.
Patterns index the variable groups of the convex training program, so every
pattern carries a witness ``u`` that realizes it.
"""
import math
import logging
from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Sequence, Tuple, TYPE_CHECKING

import numpy as np
from scipy.optimize import linprog

from .errors import ArrangementError, ShapeError
from .numerics import as_matrix, svd

if TYPE_CHECKING:
    from .network import TwoLayerReLUNet

logger = logging.getLogger(__name__)

WITNESS_TOL = 1e-9


@dataclass(frozen=True)
class ActivationPattern:
    mask: Tuple[bool, ...]

    @classmethod
    def from_array(cls, arr) -> "ActivationPattern":
        return cls(tuple(bool(b) for b in np.asarray(arr).ravel()))

    @classmethod
    def from_string(cls, bits: str) -> "ActivationPattern":
        if any(c not in "01" for c in bits):
            raise ShapeError(f"Pattern string must contain only 0/1, got {bits!r}")
        return cls(tuple(c == "1" for c in bits))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.mask, dtype=bool)

    @property
    def signs(self) -> np.ndarray:
        """The diagonal of ``2 D - I``"""
        return np.where(self.array, 1.0, -1.0)

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.mask)

    def __len__(self) -> int:
        return len(self.mask)


@dataclass
class ArrangementSet:
    n: int
    patterns: List[ActivationPattern] = field(default_factory=list)
    witnesses: List[np.ndarray] = field(default_factory=list)
    exact: bool = False

    def __len__(self) -> int:
        return len(self.patterns)

    def masks(self) -> np.ndarray:
        """Boolean array of shape (P, n)"""
        if not self.patterns:
            return np.zeros((0, self.n), dtype=bool)
        return np.array([p.mask for p in self.patterns], dtype=bool)

    def add(self, pattern: ActivationPattern, witness: np.ndarray) -> bool:
        """Append a pattern unless already present; returns whether it was added"""
        if len(pattern) != self.n:
            raise ShapeError(f"Pattern length {len(pattern)} does not match n={self.n}")
        if pattern in self.patterns:
            return False
        self.patterns.append(pattern)
        self.witnesses.append(np.asarray(witness, dtype=float))
        return True

    def union(self, other: "ArrangementSet") -> "ArrangementSet":
        merged = ArrangementSet(n=self.n, exact=self.exact or other.exact)
        for p, u in zip(self.patterns + other.patterns, self.witnesses + other.witnesses):
            merged.add(p, u)
        return merged

    def subset(self, indices: Sequence[int]) -> "ArrangementSet":
        return ArrangementSet(
            n=self.n,
            patterns=[self.patterns[i] for i in indices],
            witnesses=[self.witnesses[i] for i in indices],
            exact=False,
        )

    def validate(self, X, tol: float = WITNESS_TOL) -> bool:
        X = as_matrix(X, "data matrix")
        return all(validate_witness(X, p, u, tol) for p, u in zip(self.patterns, self.witnesses))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "patterns": [p.to_string() for p in self.patterns],
            "witnesses": [np.asarray(u, dtype=float).tolist() for u in self.witnesses],
            "exact": self.exact,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ArrangementSet":
        patterns = [ActivationPattern.from_string(s) for s in data["patterns"]]
        witnesses = [np.asarray(u, dtype=float) for u in data["witnesses"]]
        if len(patterns) != len(witnesses):
            raise ShapeError("Arrangement JSON has different numbers of patterns and witnesses")
        arr = cls(n=int(data["n"]), exact=bool(data.get("exact", False)))
        for p, u in zip(patterns, witnesses):
            arr.add(p, u)
        return arr


def validate_witness(X: np.ndarray, pattern: ActivationPattern, u: np.ndarray, tol: float = WITNESS_TOL) -> bool:
    """``D X u >= 0`` and ``(I - D) X u <= 0`` up to ``tol``"""
    return bool(np.all(pattern.signs * (X @ u) >= -tol))


def region_count_bound(n: int, r: int) -> int:
    """Upper bound ``2 * sum_{k<r} C(n-1, k)`` on the number of regions"""
    if r < 1 or n < 1:
        raise ShapeError(f"region_count_bound needs n >= 1 and r >= 1, got n={n}, r={r}")
    if r > n:
        raise ShapeError(f"rank r={r} cannot exceed the number of rows n={n}")
    return 2 * sum(math.comb(n - 1, k) for k in range(r))


class MarginOracle:
    """
    Decides whether a sign vector on a subset of rows is realizable with margin.

    Solves ``max t  s.t.  s_i x_i^T u >= t, |u|_inf <= 1, t <= 1`` as an LP; the
    sign vector is realizable iff the optimal ``t`` exceeds ``eps``.
    """

    def __init__(self, X: np.ndarray, eps: float):
        self.X = X
        self.eps = eps
        self.lp_calls = 0

    def witness(self, rows: np.ndarray, signs: np.ndarray) -> Optional[np.ndarray]:
        d = self.X.shape[1]
        self.lp_calls += 1
        A_ub = np.hstack([-(signs[:, None] * self.X[rows]), np.ones((len(rows), 1))])
        c = np.zeros(d + 1)
        c[-1] = -1.0
        bounds = [(-1.0, 1.0)] * d + [(None, 1.0)]
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(rows)), bounds=bounds, method="highs")
        if res.status != 0:
            mask = np.full(self.X.shape[0], -1)
            mask[rows] = (signs > 0).astype(int)
            raise ArrangementError(
                f"Feasibility LP failed ({res.message}) on candidate signs {mask.tolist()}",
                mask=mask.tolist(),
            )
        if -res.fun > self.eps:
            return res.x[:d]
        return None


def _margin(X: np.ndarray, margin: float) -> float:
    return margin * float(np.max(np.linalg.norm(X, axis=1), initial=0.0))


def enumerate_exact(X, margin: float = 1e-6) -> ArrangementSet:
    """
    Enumerate every region of the arrangement by incremental hyperplane insertion.

    Works in the rank-reduced coordinates ``X = U_r S_r V_r^T``; witnesses are
    mapped back through ``V_r`` and normalized to unit length.
    """
    X = as_matrix(X, "data matrix")
    n, d = X.shape
    if n == 0 or d == 0:
        raise ShapeError("enumerate_exact needs a nonempty data matrix")
    if margin <= 0:
        raise ShapeError(f"margin must be positive, got {margin}")

    row_norms = np.linalg.norm(X, axis=1)
    result = ArrangementSet(n=n, exact=True)
    if np.max(row_norms) == 0.0:
        u = np.zeros(d)
        u[0] = 1.0
        result.add(ActivationPattern(tuple([True] * n)), u)
        return result

    decomposition = svd(X)
    r = decomposition.rank()
    Xr = decomposition.left[:, :r] * decomposition.singular_values[:r]
    V = decomposition.right[:, :r]
    eps = _margin(X, margin)
    oracle = MarginOracle(Xr, eps)

    active_rows = np.flatnonzero(row_norms > 1e-12 * np.max(row_norms))
    regions: List[Tuple[np.ndarray, Optional[np.ndarray]]] = [(np.zeros(0), None)]
    for step, i in enumerate(active_rows):
        rows = active_rows[: step + 1]
        split: List[Tuple[np.ndarray, Optional[np.ndarray]]] = []
        for signs, z in regions:
            for s in (1.0, -1.0):
                new_signs = np.append(signs, s)
                if z is not None and s * (Xr[i] @ z) > eps:
                    split.append((new_signs, z))
                    continue
                w = oracle.witness(rows, new_signs)
                if w is not None:
                    split.append((new_signs, w))
        regions = split
        logger.debug(f"Hyperplane {i}: {len(regions)} regions")

    for signs, z in regions:
        mask = np.ones(n, dtype=bool)
        mask[active_rows] = signs > 0
        u = V @ z
        u /= np.linalg.norm(u)
        pattern = ActivationPattern.from_array(mask)
        if not validate_witness(X, pattern, u):
            raise ArrangementError(f"Witness does not realize pattern {pattern.to_string()}", mask=mask.tolist())
        result.add(pattern, u)

    bound = region_count_bound(n, r)
    logger.info(f"Enumerated {len(result)} regions (rank {r}, bound {bound}, {oracle.lp_calls} LPs)")
    return result


def sample_patterns(X, count: int, seed: int = 0) -> ArrangementSet:
    """Patterns ``1[X u >= 0]`` of ``count`` Gaussian draws ``u ~ N(0, I)``, deduplicated"""
    X = as_matrix(X, "data matrix")
    if count < 1:
        raise ShapeError(f"count must be at least 1, got {count}")
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((X.shape[1], count))
    result = ArrangementSet(n=X.shape[0])
    for j in range(count):
        u = draws[:, j] / np.linalg.norm(draws[:, j])
        result.add(ActivationPattern.from_array(X @ u >= 0), u)
    logger.debug(f"Sampled {len(result)} distinct patterns from {count} draws")
    return result


def harvest_patterns(X, net: "TwoLayerReLUNet") -> ArrangementSet:
    """Distinct activation patterns of the hidden neurons of ``net``"""
    X = as_matrix(X, "data matrix")
    U = np.asarray(net.U, dtype=float)
    if U.shape[1] < 1:
        raise ShapeError("harvest_patterns needs a network with at least one neuron")
    if U.shape[0] != X.shape[1]:
        raise ShapeError(f"Network input dimension {U.shape[0]} does not match data dimension {X.shape[1]}")
    result = ArrangementSet(n=X.shape[0])
    for j in range(U.shape[1]):
        u = U[:, j]
        norm = np.linalg.norm(u)
        result.add(ActivationPattern.from_array(X @ u >= 0), u / norm if norm > 0 else u)
    return result


def adaptive_flip(X, net: "TwoLayerReLUNet", quantile: float, margin: float = 1e-6) -> ArrangementSet:
    """
    Harvested patterns plus, per neuron, a variant with low-magnitude bits flipped.

    With ``k = floor(quantile * n)``, every row whose ``|x_i^T u|`` is at most the
    k-th smallest magnitude is flipped. Variants that are not realizable with
    margin are dropped.
    """
    X = as_matrix(X, "data matrix")
    if not 0.0 < quantile < 1.0:
        raise ShapeError(f"quantile must lie in (0, 1), got {quantile}")
    n = X.shape[0]
    U = np.asarray(net.U, dtype=float)
    if U.shape[0] != X.shape[1]:
        raise ShapeError(f"Network input dimension {U.shape[0]} does not match data dimension {X.shape[1]}")
    oracle = MarginOracle(X, _margin(X, margin))
    rows = np.arange(n)
    k = int(math.floor(quantile * n))

    result = ArrangementSet(n=n)
    dropped = 0
    for j in range(U.shape[1]):
        u = U[:, j]
        scores = X @ u
        norm = np.linalg.norm(u)
        base = scores >= 0
        result.add(ActivationPattern.from_array(base), u / norm if norm > 0 else u)
        if k == 0:
            continue
        threshold = np.sort(np.abs(scores))[k - 1]
        flipped = base ^ (np.abs(scores) <= threshold)
        witness = oracle.witness(rows, np.where(flipped, 1.0, -1.0))
        if witness is None:
            dropped += 1
            continue
        result.add(ActivationPattern.from_array(flipped), witness / np.linalg.norm(witness))
    if dropped:
        logger.debug(f"adaptive_flip dropped {dropped} unrealizable variants")
    return result
