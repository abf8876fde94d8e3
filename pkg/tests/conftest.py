import numpy as np
import pytest

from flatlas.atlas import car_atlas
from flatlas.implicit_system import car_system, chain2_system
from flatlas.planner import RouteSpec, demo_route_path, plan_route


@pytest.fixture(scope="session")
def car():
    return car_system()


@pytest.fixture(scope="session")
def chain2():
    return chain2_system()


@pytest.fixture(scope="session")
def atlas():
    return car_atlas()


@pytest.fixture(scope="session")
def demo_plan():
    return plan_route(RouteSpec.load(demo_route_path()))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
