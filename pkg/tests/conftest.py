import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def book16():
    from thzbeam.codebook import build_qupa_codebook

    return build_qupa_codebook(16)


@pytest.fixture(scope="session")
def book8():
    from thzbeam.codebook import build_qupa_codebook

    return build_qupa_codebook(8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
