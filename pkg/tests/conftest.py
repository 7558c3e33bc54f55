import numpy as np
import pytest

from motionforge import catalog


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def k3():
    return catalog.builtin("k3_collinear")


def random_framework(rng, n, d, edges=None, pins=()):
    coords = rng.standard_normal((n, d))
    if edges is None:
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return catalog.framework(edges, coords, pins)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
