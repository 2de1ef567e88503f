import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fellerhawkes import Grid

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def grid5():
    return Grid(5.0, 1e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
