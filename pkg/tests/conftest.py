import numpy as np
import pytest

from fractalbv import build_preset


@pytest.fixture(scope="session")
def sg():
    return build_preset("sierpinski", window_level=1)


@pytest.fixture(scope="session")
def sg0():
    return build_preset("sierpinski", window_level=0)


@pytest.fixture(scope="session")
def vs():
    return build_preset("vicsek", window_level=1)


@pytest.fixture(scope="session")
def vs0():
    return build_preset("vicsek", window_level=0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
