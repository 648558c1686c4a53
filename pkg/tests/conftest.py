import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cfreeconv.measure import arcsine, bernoulli_sym, free_poisson, gaussian, point_mass, semicircle

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def families():
    return {
        "delta": point_mass(0.3),
        "bernoulli": bernoulli_sym(1.0),
        "semicircle": semicircle(0.0, 2.0),
        "arcsine": arcsine(0.0, 2.0),
        "gaussian": gaussian(0.0, 1.0),
        "free_poisson": free_poisson(0.4),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20260417)
