import numpy as np
import pytest

from hofsc.lattice_model import FluxRational

ACCEPTANCE_LINES = []


@pytest.fixture
def flux13():
    return FluxRational(1, 3)


@pytest.fixture
def flux25():
    return FluxRational(2, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
