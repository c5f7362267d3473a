import itertools

import numpy as np
import pytest

from shadowban.graph import BanProfile, EgoGraph, Node, PopulationDataset

BANNED = BanProfile(typeahead=True)


def ego(landmark, edges, banned=(), extra_nodes=()):
    ids = [landmark]
    for a, b in edges:
        for x in (a, b):
            if x not in ids:
                ids.append(x)
    ids += [x for x in extra_nodes if x not in ids]
    nodes = [Node(x, BANNED if x in banned else BanProfile()) for x in ids]
    return EgoGraph.build(landmark, nodes, edges)


def random_ego(rng, n, p, landmark="L", banned_p=0.2):
    ids = [landmark] + [f"v{i}" for i in range(1, n)]
    edges = [(ids[i], ids[j]) for i, j in itertools.combinations(range(n), 2) if rng.random() < p]
    banned = {x for x in ids if rng.random() < banned_p}
    return ego(landmark, edges, banned, extra_nodes=ids)


@pytest.fixture
def triangle_plus_tail():
    # a-b-c triangle, c-d tail, e isolated
    return ego("a", [("a", "b"), ("b", "c"), ("c", "a"), ("c", "d")], banned={"a", "d"}, extra_nodes=["e"])


@pytest.fixture
def small_dataset(triangle_plus_tail):
    g2 = ego("x", [("x", "y"), ("y", "z")], banned={"y"})
    return PopulationDataset("RANDOM", [triangle_plus_tail, g2])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
