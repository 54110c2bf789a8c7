import numpy as np
import pytest

from riskgraph.graph import build_graph


def path_graph(names):
    return build_graph(list(names), list(zip(names[:-1], names[1:])))


@pytest.fixture
def path_abcd():
    return path_graph("abcd")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sig6(x):
    """Round to six significant figures."""
    return float(f"{float(x):.6g}")


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line[1])
