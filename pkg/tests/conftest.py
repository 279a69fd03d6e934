import numpy as np
import pytest

from src.data import Dataset
from src.simulation import contour_scenario
from src.utils import QUIET, set_verbosity


@pytest.fixture(autouse=True)
def _quiet():
    set_verbosity(QUIET)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_linear(n=80, p=6, active=3, noise=0.5, seed=0, intercept=1.0):
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:active] = np.linspace(2.0, 1.0, active)
    y = intercept + X @ beta + noise * r.standard_normal(n)
    return Dataset(X, y), beta


@pytest.fixture
def linear_data():
    return make_linear()


@pytest.fixture
def contour_c20():
    return contour_scenario(0.20, 2024)


@pytest.fixture
def contour_c10():
    return contour_scenario(0.10, 2024)
