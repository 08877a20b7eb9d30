import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def line():
    from stochquant.numerics import SpatialGrid

    return SpatialGrid.line(-10.0, 10.0, 799)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
