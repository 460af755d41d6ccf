import pytest

from robust_hedge import Payoff
from robust_hedge.models import BlackScholes, path_seed, simulate_path

ACCEPTANCE_LINES = []


@pytest.fixture
def call():
    return Payoff.call(100.0)


@pytest.fixture
def put():
    return Payoff.put(100.0)


@pytest.fixture
def bs():
    return BlackScholes(0.2, 0.0, 100.0)


@pytest.fixture
def bs_path(bs):
    return simulate_path(bs, 0.5, 2000, path_seed(42, 0))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
