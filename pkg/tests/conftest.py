import numpy as np
import pytest

from gnnmoe.graph import Graph

from oracles import random_edges


def random_graph(n, m, d, num_classes, seed):
    rng = np.random.default_rng(seed)
    edges = random_edges(n, m, rng)
    labels = np.arange(n) % num_classes
    return Graph.from_edges(rng.normal(size=(n, d)), labels, edges, num_classes=num_classes)


@pytest.fixture
def two_node():
    return Graph.from_edges(np.array([[2.0], [4.0]]), [0, 1], [[0, 1]], num_classes=2)


@pytest.fixture
def graph30():
    return random_graph(30, 60, 4, 3, seed=1)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
