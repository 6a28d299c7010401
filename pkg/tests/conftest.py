import sys

import numpy as np
import pytest

from dflsim.topology import Graph, complete_graph


@pytest.fixture
def star4():
    return Graph(4, frozenset({(0, 1), (0, 2), (0, 3)}))


@pytest.fixture
def k10():
    return complete_graph(10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda text: int(text.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
