import numpy as np
import pytest

from gridevac import fixtures


@pytest.fixture(scope="session")
def tiny():
    return fixtures.tiny_feeder()


@pytest.fixture(scope="session")
def three_phase():
    return fixtures.three_phase_feeder()


@pytest.fixture(scope="session")
def weak():
    return fixtures.weak_feeder()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
