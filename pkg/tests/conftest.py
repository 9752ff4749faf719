import numpy as np
import pytest

from wnlbracket.schwartz import Grid


@pytest.fixture(scope="session")
def grid():
    return Grid(L=12.0, m=4097)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
