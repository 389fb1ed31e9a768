import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gridsddp.network import parse_case
from gridsddp.wind import load_wind_model

CASES = os.path.join(os.path.dirname(__file__), os.pardir, "cases")


def case_path(name):
    return os.path.join(CASES, name)


@pytest.fixture(scope="session")
def case9():
    return parse_case(case_path("case9.grid")), load_wind_model(case_path("case9.model"))


@pytest.fixture(scope="session")
def tiny2():
    return parse_case(case_path("tiny2.grid")), load_wind_model(case_path("tiny2.model"))


@pytest.fixture(scope="session")
def det1():
    return parse_case(case_path("det1.grid")), load_wind_model(case_path("det1.model"))


@pytest.fixture(scope="session")
def dp3g():
    return parse_case(case_path("dp3g.grid")), load_wind_model(case_path("dp3g.model"))


@pytest.fixture(scope="session")
def policy_a():
    return parse_case(case_path("policy_a.grid")), load_wind_model(case_path("policy_a.model"))


@pytest.fixture(scope="session")
def policy_b():
    return parse_case(case_path("policy_b.grid")), load_wind_model(case_path("policy_b.model"))


@pytest.fixture(params=["python", "cython"])
def lp_kernel(request):
    """Run LP-level tests under both kernels when the extension is built."""
    from gridsddp.lp import available_kernels, set_kernel, active_kernel

    if request.param not in available_kernels():
        pytest.skip(f"{request.param} kernel not built")
    saved = active_kernel()
    set_kernel(request.param)
    yield request.param
    set_kernel(saved)


def assert_close(a, b, rel=1e-9, abs_tol=1e-9):
    assert abs(a - b) <= abs_tol + rel * max(abs(a), abs(b)), (a, b)
