import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

PI3 = (0.1, 0.2, 0.3)


def interior_vectors(min_n=1, max_n=6, lo=1e-6, hi=1.0 - 1e-6):
    return st.integers(min_n, max_n).flatmap(
        lambda n: st.lists(st.floats(lo, hi), min_size=n, max_size=n).map(np.array)
    )


def interior_pairs(min_n=2, max_n=6, lo=1e-6, hi=1.0 - 1e-6):
    """(x, pi) of a common length."""

    def build(n):
        vec = st.lists(st.floats(lo, hi), min_size=n, max_size=n).map(np.array)
        return st.tuples(vec, vec)

    return st.integers(min_n, max_n).flatmap(build)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def pi3():
    return np.array(PI3)
