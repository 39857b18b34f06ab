import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fedchain import ckks
from fedchain.data import default_mnist_dir, load_mnist_subset

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def test_params():
    return ckks.preset("test")


@pytest.fixture(scope="session")
def full_params():
    return ckks.preset("full")


@pytest.fixture(scope="session")
def test_keys(test_params):
    return ckks.keygen(test_params, 7)


@pytest.fixture(scope="session")
def full_keys(full_params):
    return ckks.keygen(full_params, 42)


@pytest.fixture(scope="session")
def mnist_subset():
    if default_mnist_dir() is None:
        pytest.skip("no MNIST IDX files available")
    return load_mnist_subset(None, 5000, 1000, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
