import numpy as np
import pytest

from dckf.scenario import load_scenario


@pytest.fixture(scope="session")
def baseline():
    return load_scenario("baseline")


@pytest.fixture(scope="session")
def case1():
    return load_scenario("case1")


@pytest.fixture(scope="session")
def case2():
    return load_scenario("case2")


@pytest.fixture(scope="session")
def case3():
    return load_scenario("case3")


def random_spd(rng, n, floor=0.3):
    m = rng.standard_normal((n, n))
    return m @ m.T + floor * np.eye(n)


def random_connected_topology(rng, n):
    from dckf.graph import Topology, is_connected

    adj = np.zeros((n, n))
    order = rng.permutation(n)
    for a, b in zip(order[:-1], order[1:]):  # random spanning tree
        adj[a, b] = adj[b, a] = 1.0
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.3:
                adj[i, j] = adj[j, i] = 1.0
    topo = Topology(adj)
    assert is_connected(topo)
    return topo
