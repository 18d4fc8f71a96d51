import numpy as np
import pytest

from mafem.lagrange import build_dofmap
from mafem.mesh import unit_square_mesh

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def dm_k3_n4():
    return build_dofmap(unit_square_mesh(4), 3)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
