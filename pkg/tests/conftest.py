import numpy as np
import pytest

from pdesurrogate.grid import Field, GridSpec


def random_field(rng, d, n, low=0.3, high=3.0):
    grid = GridSpec(d, n)
    return Field(rng.uniform(low, high, size=grid.shape), grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: statistically heavy or long acceptance runs')
