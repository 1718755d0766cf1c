import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "liblab",
    deadline=None,
    max_examples=25,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile("liblab")


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)
