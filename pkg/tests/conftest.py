import hypothesis
import numpy as np
import pytest

from branchwalk.chains import make_biased_walk, make_finite, make_simple_walk

hypothesis.settings.register_profile("default", deadline=None, max_examples=60)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("default")

SELF_LOOP = [[1.0]]
PERIOD_TWO = [[0.0, 1.0], [1.0, 0.0]]
LAZY_THREE = [[0.2, 0.5, 0.3], [0.4, 0.0, 0.6], [0.5, 0.5, 0.0]]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def self_loop():
    return make_finite(SELF_LOOP)


@pytest.fixture(scope="session")
def period_two():
    return make_finite(PERIOD_TWO)


@pytest.fixture(scope="session")
def lazy_three():
    return make_finite(LAZY_THREE)


def builtin_chains():
    return [
        make_biased_walk(0.5),
        make_biased_walk(0.3),
        make_biased_walk(1.0),
        make_simple_walk(2),
        make_simple_walk(3),
        make_finite(SELF_LOOP),
        make_finite(PERIOD_TWO),
        make_finite(LAZY_THREE),
    ]
