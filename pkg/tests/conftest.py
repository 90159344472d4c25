import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ricciopt.graph import MetricState, ParameterGraph  # noqa: E402

_ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_graph(V, edges, g=None, theta=None, dim=1):
    coords = np.zeros((V, dim))
    graph = ParameterGraph(coords, np.zeros(V) if theta is None else theta, edges)
    gv = np.ones(graph.edge_count) if g is None else g
    return graph, MetricState.build(graph, gv)


def complete_edges(V):
    return [(i, j) for i in range(V) for j in range(i + 1, V)]


def cycle_edges(V):
    return [(i, (i + 1) % V) for i in range(V)]


def random_edges(rng, V, p):
    return [(i, j) for i in range(V) for j in range(i + 1, V) if rng.random() < p]
