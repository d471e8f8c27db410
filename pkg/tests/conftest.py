import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mvkernels.algebra import Signature, all_valid_signatures

# JIT compilation makes first examples slow; deadlines off for kernel tests.
settings.register_profile(
    "kernels", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("kernels")

ALL_SIGNATURES = all_valid_signatures(3)
DENSE_SIGNATURES = [Signature((1,) * k) for k in (1, 2, 3)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
