import time

import numpy as np
import pytest

from lockdown_hjb import ModelParams, MortalityCurve, solve_value_function

# a parameter set whose optimal feedback actually locks down (A_3 and A_4 occur)
ACTIVE_PARAMS = ModelParams(
    beta=0.5, gamma=0.1, chi=100.0, nu=0.2, r=0.05,
    phi=MortalityCurve("affine", 0.02, 0.3, 0.1),
)


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def active_params():
    return ACTIVE_PARAMS


@pytest.fixture(scope="session")
def field50(params):
    return solve_value_function(params, n=50)


@pytest.fixture(scope="session")
def field100(params):
    return solve_value_function(params, n=100)


@pytest.fixture(scope="session")
def timed_field200(params):
    start = time.perf_counter()
    field = solve_value_function(params, n=200)
    return field, time.perf_counter() - start


@pytest.fixture(scope="session")
def field200(timed_field200):
    return timed_field200[0]


@pytest.fixture(scope="session")
def active_field(active_params):
    return solve_value_function(active_params, n=40)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
