import numpy as np
import pytest

from crowdamp.state_evolution import gauss_hermite_rule


@pytest.fixture(scope="session")
def rule():
    return gauss_hermite_rule()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
