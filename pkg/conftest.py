import numpy as np
import pytest

from model.dirichlet_form import product_gaussian_sample_set
from model.free_field import RectangleDomain, build_modes
from model.parabolic_solver import Grid


@pytest.fixture(scope="session")
def unit_modes():
    return build_modes(RectangleDomain(1.0, 1.0), 8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def line_grid():
    return Grid(1, 6.0, 61)


@pytest.fixture
def plane_grid():
    return Grid(2, 5.0, 41)


@pytest.fixture(scope="session")
def gaussian_set():
    """Product Gaussian with variances 1, 1/2, 1/3."""
    return product_gaussian_sample_set([1.0, 2.0, 3.0], count=40000, seed=17)
