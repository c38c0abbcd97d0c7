import numpy as np
import pytest

from fogplace.topology import CLOUD, FOG, NetworkGraph, NodeSpec


def make_graph(n, edges, delays=None, clouds=(), caps=None):
    """Hand-built graph; ``caps`` maps node -> (cpu, mem, storage)."""
    caps = caps or {}
    nodes = [NodeSpec(i, CLOUD if i in clouds else FOG, *caps.get(i, (10.0, 10.0, 10.0)))
             for i in range(n)]
    edges = sorted((min(u, v), max(u, v)) for u, v in edges)
    delays = delays or {}
    d = {e: float(delays.get(e, 1.0)) for e in edges}
    return NetworkGraph(nodes, edges, d, kind="BA", seed=0)


@pytest.fixture
def path4():
    return make_graph(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the test summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
