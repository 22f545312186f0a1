import numpy as np
import pytest

from fpacdma.spreading import correlation_matrix, generate_gold_family


@pytest.fixture(scope="session")
def gold5():
    return generate_gold_family(5)


@pytest.fixture(scope="session")
def R4(gold5):
    return correlation_matrix(gold5, 4).R


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
