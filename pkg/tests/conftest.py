import numpy as np
import pytest

from optosync import model, meanfield as mf

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def params():
    return model.SystemParams()


@pytest.fixture(scope="session")
def operating_point(params):
    state = mf.steady_state(params)
    return state, mf.effective_coupling(state, params)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split()[1]):
            terminalreporter.write_line(line)
