import numpy as np
import pytest

from heatstab import pipeline
from heatstab.config import load_config
from heatstab.spectral import SpectralParams, build_system


@pytest.fixture(scope="session")
def default_config():
    return load_config()


@pytest.fixture(scope="session")
def params():
    return SpectralParams(1.5, 5.0)


@pytest.fixture(scope="session")
def system(params):
    return build_system(params, 8)


@pytest.fixture(scope="session")
def design(default_config):
    return pipeline.design(default_config)


@pytest.fixture(scope="session")
def gains(design):
    return design.gains


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
