import random

import pytest

from jtsampler.graph_core import Graph, is_decomposable


def random_decomposable(v: int, rng: random.Random, p: float = 0.5) -> Graph:
    """Rejection sample: random edge sets until one is chordal."""
    pairs = [(i, j) for i in range(v) for j in range(i + 1, v)]
    while True:
        g = Graph(v, [e for e in pairs if rng.random() < p])
        if is_decomposable(g):
            return g


def random_graph(v: int, rng: random.Random, p: float = 0.5) -> Graph:
    pairs = [(i, j) for i in range(v) for j in range(i + 1, v)]
    return Graph(v, [e for e in pairs if rng.random() < p])


@pytest.fixture
def rng():
    return random.Random(12345)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def emit(criterion, ok, detail):
        line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line, flush=True)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
