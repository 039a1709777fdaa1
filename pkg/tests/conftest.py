import os
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def _quiet_tails():
    from khdress.errors import NonConvergedTail

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergedTail)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
