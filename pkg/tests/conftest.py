import numpy as np
import pytest

from stofhn.grid import SpatialGrid
from stofhn.noise import NoiseModel
from stofhn.nonlinearity import DiffusionLaw, IonicCubic


@pytest.fixture(scope="session")
def unit_grid():
    return SpatialGrid(dimension=1, extent=(1.0,), interior=(99,))


@pytest.fixture(scope="session")
def small_grid():
    return SpatialGrid(dimension=1, extent=(1.0,), interior=(31,))


@pytest.fixture(scope="session")
def grid_2d():
    return SpatialGrid(dimension=2, extent=(1.0, 1.0), interior=(15, 15))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cubic():
    return IonicCubic(a=0.5)


@pytest.fixture(scope="session")
def linear_law():
    return DiffusionLaw("linear", c=1.0)


@pytest.fixture(scope="session")
def default_noise(unit_grid):
    return NoiseModel.default(unit_grid)
