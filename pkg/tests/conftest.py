import numpy as np
import pytest

from hsflow import make_grid
from hsflow.ch import init_data
from hsflow.operators import KernelOperator

GAUSSIAN = {"name": "gaussian", "a": 1.0, "sigma": 1.0, "x0": 0.0}


def random_operator(rng, grid, scale=1.0, symmetric=False):
    A = rng.standard_normal((grid.n, grid.n))
    if symmetric:
        A = 0.5 * (A + A.T)
    return KernelOperator(grid, scale * A)


def random_sym_coords(rng, grid, norm=1.0, symmetric=False):
    """Operator whose symmetrized matrix has the given Frobenius norm."""
    A = rng.standard_normal((grid.n, grid.n))
    if symmetric:
        A = 0.5 * (A + A.T)
    A *= norm / np.linalg.norm(A)
    return KernelOperator.from_sym(grid, A)


@pytest.fixture
def rng():
    return np.random.default_rng(20260314)


@pytest.fixture(scope="session")
def gauss129():
    return init_data(GAUSSIAN, make_grid(12.0, 129))
