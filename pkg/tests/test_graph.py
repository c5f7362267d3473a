import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BANNED, ego, random_ego
from shadowban.graph import (
    BanProfile,
    EgoGraph,
    Node,
    PopulationDataset,
    ban_cooccurrence,
    ban_summary,
    clustering_avg,
    degree_by_ban_status,
    k_core_nodes,
    local_clustering,
    mean_degree,
    neighbor_sb_fraction,
    sb_fraction,
    topology_summary,
    two_core_size,
    undirected_view,
)


def to_nx(g: EgoGraph) -> nx.Graph:
    h = nx.Graph()
    h.add_nodes_from(g.nodes)
    h.add_edges_from(g.edges)
    return h


def brute_clustering(g: EgoGraph) -> dict:
    adj = undirected_view(g)
    out = {}
    for v, nb in adj.items():
        k = len(nb)
        if k < 2:
            out[v] = 0.0
            continue
        links = sum(1 for a, b in itertools.combinations(sorted(nb), 2) if b in adj[a])
        out[v] = links / (k * (k - 1) / 2)
    return out


def test_ban_profile_or_rule():
    combos = BanProfile.all_combinations()
    assert len(set(combos)) == 8
    assert [c.banned for c in combos].count(False) == 1
    for c in combos:
        assert BanProfile.from_dict(c.as_dict()) == c


def test_undirected_view_merges_reciprocal_edges():
    g = ego("a", [("a", "b"), ("b", "a"), ("b", "c")])
    adj = undirected_view(g)
    assert adj == {"a": {"b"}, "b": {"a", "c"}, "c": {"b"}}
    assert list(g.undirected().degree) == [1, 2, 1]


def test_violations():
    g = EgoGraph.build("a", [Node("a"), Node("b")], [("a", "a"), ("a", "zz")])
    bad = g.violations()
    assert any("self-loop" in m for m in bad)
    assert any("'zz'" in m for m in bad)
    assert EgoGraph.build("a", [Node("b")]).violations() == ["graph 'a': landmark not among nodes"]


def test_sb_fraction(triangle_plus_tail):
    assert sb_fraction(triangle_plus_tail) == pytest.approx(2 / 5)
    with pytest.raises(ValueError):
        sb_fraction(EgoGraph("a", {}, ()))


def test_degree_and_neighbor_fractions(small_dataset):
    # banned: a (deg 2), d (deg 1), y (deg 2); clean: b 2, c 3, e 0, x 1, z 1
    b, c = degree_by_ban_status(small_dataset)
    assert b == pytest.approx(5 / 3)
    assert c == pytest.approx(7 / 5)
    nb_b, nb_c = neighbor_sb_fraction(small_dataset)
    # a: 0/2, d: 0/1, y: 0/2 ; b: 1/2, c: 2/3, x: 1/1, z: 1/1 (e excluded)
    assert nb_b == pytest.approx(0.0)
    assert nb_c == pytest.approx((1 / 2 + 2 / 3 + 1 + 1) / 4)


def test_group_without_members_is_none():
    d = PopulationDataset("X", [ego("a", [("a", "b")])])
    assert degree_by_ban_status(d) == (None, 1.0)
    assert neighbor_sb_fraction(d)[0] is None


def test_clustering_matches_networkx_and_brute_force(rng):
    for n, p in [(8, 0.5), (20, 0.3), (40, 0.15), (5, 1.0)]:
        g = random_ego(rng, n, p)
        ours = dict(zip(g.undirected().ids, local_clustering(g.undirected())))
        ref = nx.clustering(to_nx(g))
        brute = brute_clustering(g)
        for v in g.nodes:
            assert ours[v] == pytest.approx(ref[v], abs=1e-12)
            assert ours[v] == pytest.approx(brute[v], abs=1e-12)
        assert clustering_avg(g) == pytest.approx(nx.average_clustering(to_nx(g)), abs=1e-12)


def test_two_core_matches_networkx(rng, triangle_plus_tail):
    assert two_core_size(triangle_plus_tail) == 3
    for n, p in [(30, 0.06), (50, 0.05), (10, 0.3)]:
        g = random_ego(rng, n, p)
        h = to_nx(g)
        core = set(nx.k_core(h, 2).nodes)
        mask = k_core_nodes(g.undirected(), 2)
        assert {v for v, m in zip(g.undirected().ids, mask) if m} == core


def test_cooccurrence_counts_unique_users():
    ghost_ta = BanProfile(typeahead=True, ghost=True)
    g1 = EgoGraph.build("a", [Node("a", ghost_ta), Node("b", BanProfile(search=True)), Node("c")], [("a", "b")])
    g2 = EgoGraph.build("c", [Node("c"), Node("a", ghost_ta)], [("c", "a")])
    co = ban_cooccurrence(PopulationDataset("X", [g1, g2]))
    assert co.n_users == 3 and co.n_banned == 2
    assert co.totals == {"typeahead": 1, "search": 1, "ghost": 1}
    assert co.conditional["ghost"]["typeahead"] == 1.0
    assert co.conditional["search"]["ghost"] == 0.0


def test_cooccurrence_undefined_when_type_absent():
    co = ban_cooccurrence(PopulationDataset("X", [ego("a", [("a", "b")])]))
    assert co.conditional["ghost"]["typeahead"] is None


def test_summaries(small_dataset):
    t = topology_summary(small_dataset)
    assert t["graphs"] == 2 and t["total_nodes"] == 8
    assert mean_degree(small_dataset) == pytest.approx((2 + 2 + 3 + 1 + 0 + 1 + 2 + 1) / 8)
    b = ban_summary(small_dataset)
    assert b["sb_nodes"] == 3
    assert b["sb_fraction_pooled"] == pytest.approx(3 / 8)
    assert b["sb_fraction_per_graph_avg"] == pytest.approx((2 / 5 + 1 / 3) / 2)


def test_with_bans_keeps_topology(triangle_plus_tail):
    g = triangle_plus_tail.with_bans({"b": BANNED})
    assert g.n_banned == 3
    assert g.edges == triangle_plus_tail.edges


edge_lists = st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), max_size=40)


@settings(max_examples=60, deadline=None)
@given(edge_lists)
def test_clustering_bounds_and_core_degrees(pairs):
    edges = [(f"n{a}", f"n{b}") for a, b in pairs if a != b]
    g = ego("n0", edges, extra_nodes=[f"n{i}" for i in range(12)])
    u = g.undirected()
    c = local_clustering(u)
    assert np.all((c >= 0) & (c <= 1))
    mask = k_core_nodes(u, 2)
    for i in np.flatnonzero(mask):
        assert sum(mask[j] for j in u.neighbors(i)) >= 2
    # degree sum is twice the number of distinct undirected edges
    assert u.degree.sum() == 2 * len({frozenset(e) for e in edges})
