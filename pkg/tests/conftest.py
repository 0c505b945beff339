import numpy as np
import pytest

from containment.config import bundled_path
from containment.graph_model import DirectedNetwork, load_network

ACCEPTANCE_LINES: list[str] = []


def random_digraph(rng, n=None, n_leaders=None, p=None) -> DirectedNetwork:
    """Random weighted digraph with at least one leader and one follower.

    Leaders are the last ``n_leaders`` agents before a random relabelling.
    Sparse edge probabilities make unreachable followers common.
    """
    n = int(rng.integers(6, 11)) if n is None else n
    m = int(rng.integers(1, 4)) if n_leaders is None else n_leaders
    p = float(rng.uniform(0.08, 0.45)) if p is None else p
    nf = n - m
    A = np.zeros((n, n))
    for i in range(nf):
        mask = rng.random(n) < p
        mask[i] = False
        if not mask.any():
            j = int(rng.integers(0, n - 1))
            mask[j if j < i else j + 1] = True
        A[i, mask] = rng.uniform(0.2, 2.0, size=mask.sum())
    perm = rng.permutation(n)
    return DirectedNetwork(A).permuted(perm)


@pytest.fixture
def chain():
    return load_network(bundled_path("chain.net"))[0]


@pytest.fixture
def fan2():
    return load_network(bundled_path("fan_2leaders.net"))[0]


@pytest.fixture
def fan3():
    return load_network(bundled_path("fan_3leaders.net"))[0]


@pytest.fixture
def disconnected():
    return load_network(bundled_path("disconnected.net"))[0]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
