import numpy as np
import pytest

from src.core.datasets import dataset_toy_1d
from src.core.solvers import SolverConfig


@pytest.fixture
def toy_data():
    return dataset_toy_1d()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def precise_solver():
    return SolverConfig(tol_abs=1e-10, tol_rel=1e-9, max_iter=50000)


@pytest.fixture
def general_position():
    """Gaussian data matrices, in general position with probability one"""
    def make(n: int, d: int, seed: int = 0) -> np.ndarray:
        return np.random.default_rng(seed).standard_normal((n, d))
    return make
