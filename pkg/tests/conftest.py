import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from netinverse import Graph
from netinverse.bench import random_graph

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def path3():
    return Graph(3, [(0, 1), (1, 2)], boundary=(0, 2))


@pytest.fixture
def triangle():
    return Graph(3, [(0, 1), (0, 2), (1, 2)], boundary=(0, 2))


def connected_graph(seed, n, density=0.4, n_boundary=2):
    rng = np.random.default_rng(seed)
    g = random_graph(n, rng, density=density)
    bnd = rng.choice(n, size=n_boundary, replace=False)
    return g.with_boundary(bnd), rng


@st.composite
def graphs(draw, min_n=2, max_n=9, n_boundary=2):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    g, _ = connected_graph(seed, n, 0.5, min(n_boundary, n - 1))
    return g, seed


# acceptance outcomes, echoed once more at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
