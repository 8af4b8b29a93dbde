# src/core/datasets.py
"""Built-in synthetic datasets and the CSV loader."""
import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import pandas as pd

from .errors import DatasetError

logger = logging.getLogger(__name__)


def append_ones(X: np.ndarray) -> np.ndarray:
    """Bias column for the single-output model"""
    return np.hstack([X, np.ones((X.shape[0], 1))])


def dataset_toy_1d() -> Tuple[np.ndarray, np.ndarray]:
    """Five points on the line with a bias column"""
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    y = np.array([1.0, -1.0, 1.0, 1.0, -1.0])
    return append_ones(x[:, None]), y


def dataset_2d_synthetic(kind: str, n: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Labelled points in the plane.

    ``clusters``: two Gaussian clusters, one per label.
    ``anomaly``: the same clusters, tighter, with one negative sample planted at
    the centroid of the positive cluster.
    """
    if n < 4:
        raise DatasetError(f"2-D datasets need n >= 4, got {n}")
    rng = np.random.default_rng(seed)
    n_pos = n // 2
    n_neg = n - n_pos
    if kind == "clusters":
        pos = rng.normal([1.0, 1.0], 0.6, size=(n_pos, 2))
        neg = rng.normal([-1.0, -1.0], 0.6, size=(n_neg, 2))
    elif kind == "anomaly":
        pos = rng.normal([1.0, 1.0], 0.3, size=(n_pos, 2))
        neg = rng.normal([-1.5, -1.5], 0.3, size=(n_neg - 1, 2))
        neg = np.vstack([neg, pos.mean(axis=0)])
    else:
        raise DatasetError(f"Unknown 2-D dataset kind {kind!r}; expected 'clusters' or 'anomaly'")
    X = np.vstack([pos, neg])
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    return X, y


def random_signals(n: int, width: int, seed: int = 0, noise: float = 0.1) -> Tuple[np.ndarray, np.ndarray]:
    """Gaussian signals with labels from a planted linear filter plus noise"""
    if n < 1 or width < 1:
        raise DatasetError(f"random_signals needs n >= 1 and width >= 1, got n={n}, width={width}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, width))
    w = rng.standard_normal(width)
    y = X @ w + noise * rng.standard_normal(n)
    return X, y


def load_csv(path: Union[str, Path], label_col: str, add_bias: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Numeric CSV with a header row. Features are the remaining columns in header order.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"CSV file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"{path} is empty") from e
    except pd.errors.ParserError as e:
        raise DatasetError(f"Could not parse {path}: {e}") from e

    if label_col not in frame.columns:
        raise DatasetError(f"Label column {label_col!r} not found in {path} (columns: {list(frame.columns)})")
    if frame.empty:
        raise DatasetError(f"{path} has a header but no data rows")

    numeric = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = numeric.isna() | ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        # header is line 1
        raise DatasetError(
            f"{path}: non-numeric value {frame.iat[row, col]!r} at line {row + 2}, column {col + 1} "
            f"({frame.columns[col]!r})"
        )

    y = numeric[label_col].to_numpy(dtype=float)
    X = numeric.drop(columns=[label_col]).to_numpy(dtype=float)
    if X.shape[1] == 0 and not add_bias:
        raise DatasetError(f"{path} has no feature columns besides {label_col!r}")
    if add_bias:
        X = append_ones(X)
    logger.info(f"Loaded {X.shape[0]} samples with {X.shape[1]} features from {path}")
    return X, y
