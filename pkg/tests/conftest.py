import numpy as np
import pytest

from ferroflow.mesh import build_uniform_mesh
from ferroflow.stepper import Discretization

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def mesh2():
    return build_uniform_mesh(2)


@pytest.fixture(scope="session")
def disc2():
    return Discretization.uniform(2)


@pytest.fixture(scope="session")
def disc3():
    return Discretization.uniform(3)
