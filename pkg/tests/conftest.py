import numpy as np
import pytest

from truncdiff.schedule import build_linear_schedule


@pytest.fixture
def sched4():
    return build_linear_schedule(4, 0.1, 0.4, 1.0)


@pytest.fixture(scope="session")
def default_sched():
    return build_linear_schedule()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdicts():
    """Acceptance lines, echoed again in the terminal summary."""
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
