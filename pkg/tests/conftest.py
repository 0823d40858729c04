import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from resample.tensor import Rng, randn

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return Rng(1234)


def rand(shape, seed=0, std=1.0, dtype=np.float64):
    return randn(shape, Rng(seed), std, dtype)
