import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nhcartan import zoo

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def models():
    return {name: zoo.get_model(name) for name in zoo.model_names()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
