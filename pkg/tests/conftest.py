import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ipgm.graph import ProximityGraph
from ipgm.store import VectorStore

settings.register_profile(
    "ipgm", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("ipgm")


def make_store(X, metric="l2"):
    X = np.asarray(X, dtype=np.float32)
    store = VectorStore(X.shape[1], metric)
    store.add_many(X)
    return store


def complete_graph(n, d=None):
    g = ProximityGraph(d or max(n - 1, 1), capacity=n)
    for u in range(n):
        g.add_vertex(u)
    for u in range(n):
        for v in range(n):
            if u != v:
                g.add_edge(u, v)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def line_store():
    return make_store([[0, 0], [1, 0], [5, 0]])


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
