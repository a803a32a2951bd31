import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_tangent(m, x, rng, scale=1.0):
    """A random tangent vector at ``x`` with norm ``scale``."""
    v = m.project(x, rng.standard_normal(m.ambient_dim))
    return scale * v / np.linalg.norm(v)
