import numpy as np
import pytest

from rdch.fem import FemSpace
from rdch.mesh import build_interval_mesh, build_structured_triangle_mesh
from rdch.physics import ModelParams


@pytest.fixture(scope="session")
def line100():
    return FemSpace(build_interval_mesh(1.0, 100))


@pytest.fixture(scope="session")
def square8():
    return FemSpace(build_structured_triangle_mesh(1.0, 8))


@pytest.fixture
def table1():
    return ModelParams(gamma=0.014**2, sigma=5e-5, n_star=0.6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    lines = test_acceptance.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
