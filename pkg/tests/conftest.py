import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from atomchain import displaced_chain

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def amplified_chain():
    """Four atoms, last gap 1.03 um, 361 K."""
    return displaced_chain(4, d=1.03e-6, bath_T=361.0)
