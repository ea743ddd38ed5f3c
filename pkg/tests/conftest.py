import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture
def toy_1d():
    """Separable 1-D set: bins {-2, -1 | 1, 2}; optimum w = 1, b = 0, mu = 0.5."""
    from ordfri.data import Dataset

    return Dataset(np.array([[-2.0], [-1.0], [1.0], [2.0]]), np.array([1, 1, 2, 2]))
