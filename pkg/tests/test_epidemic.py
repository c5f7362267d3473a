import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import BANNED, ego
from oracles import pooled_chisquare, si_count_distribution
from shadowban.epidemic import (
    RidgePoint,
    SIParams,
    _count_worker,
    _ridge_worker,
    analytic_beta,
    analytic_mu,
    expected_fraction,
    fit_ridge,
    neighbor_conditional_empirical,
    plant_synthetic,
    ridge_valley,
    si_counts,
    si_sample,
    si_simulate,
    simulated_neighbor_conditional,
)
from shadowban.graph import PopulationDataset, UndirectedGraph


def from_nx(h: nx.Graph) -> UndirectedGraph:
    return UndirectedGraph.from_edges(h.number_of_nodes(), h.edges())


def adj_of(u: UndirectedGraph) -> dict:
    return {i: set(u.neighbors(i).tolist()) for i in range(u.n)}


HOUSE = from_nx(nx.house_graph())


def test_params_validated():
    with pytest.raises(ValueError):
        SIParams(-0.1, 0.2)
    with pytest.raises(ValueError):
        SIParams(0.1, 1.2)


def test_per_edge_route_matches_enumeration():
    p = SIParams(0.3, 0.5)
    exact = si_count_distribution(adj_of(HOUSE), p.p0, p.beta)
    rng = np.random.default_rng(1)
    counts = np.array([si_simulate(HOUSE, p, rng).sum() for _ in range(20000)])
    stat, dof = pooled_chisquare(np.bincount(counts, minlength=HOUSE.n + 1), exact * len(counts))
    assert stats.chi2.sf(stat, dof) > 0.001


def test_batched_route_matches_enumeration():
    p = SIParams(0.3, 0.5)
    exact = si_count_distribution(adj_of(HOUSE), p.p0, p.beta)
    counts = si_counts(HOUSE, p, trials=20000, seed=2)
    stat, dof = pooled_chisquare(np.bincount(counts, minlength=HOUSE.n + 1), exact * len(counts))
    assert stats.chi2.sf(stat, dof) > 0.001


def test_enumeration_oracle_sanity():
    # path a-b: count 2 iff both initial, or one initial and its coin fires
    p0, beta = 0.3, 0.5
    dist = si_count_distribution({0: {1}, 1: {0}}, p0, beta)
    assert dist[0] == pytest.approx(0.49)
    assert dist[2] == pytest.approx(0.09 + 2 * 0.21 * 0.5)
    assert dist.sum() == pytest.approx(1.0)


def test_beta_zero_is_independent_bans():
    u = from_nx(nx.cycle_graph(100))
    counts = si_counts(u, SIParams(0.05, 0.0), trials=10000, seed=3)
    expected = stats.binom.pmf(np.arange(101), 100, 0.05) * 10000
    stat, dof = pooled_chisquare(np.bincount(counts, minlength=101), expected)
    assert stats.chi2.sf(stat, dof) > 0.01


def test_beta_one_contaminates_every_neighbour():
    u = from_nx(nx.gnp_random_graph(60, 0.08, seed=4))
    for seed in range(5):
        b = si_simulate(u, SIParams(0.1, 1.0), seed)
        rng = np.random.default_rng(seed)
        initial = rng.random(u.n) < 0.1
        assert np.array_equal(b, initial | ((u.matrix @ initial.astype(float)) > 0))


def test_zero_p0_bans_nobody():
    u = from_nx(nx.complete_graph(10))
    assert si_counts(u, SIParams(0.0, 1.0), trials=500, seed=0).sum() == 0


def test_expected_fraction_matches_simulation():
    h = nx.barabasi_albert_graph(300, 3, seed=5)
    u = from_nx(h)
    g = ego("0", [(str(a), str(b)) for a, b in h.edges()])
    d = PopulationDataset("X", [g])
    p = SIParams(0.02, 0.15)
    sample = si_sample(g.undirected(), p, trials=3000, seed=6)
    mean = sample.mean()
    se = sample.mean(axis=1).std() / math.sqrt(len(sample))
    assert abs(mean - expected_fraction(d, p)) < 4 * se
    assert u.n == g.undirected().n


@pytest.mark.parametrize("k", [1, 3, 5, 10])
def test_analytic_mu_closed_form(k):
    for p0 in (0.0, 0.01, 0.05, 0.3):
        for beta in (0.0, 0.1, 0.5, 1.0):
            closed = p0 + (1 - p0) * (1 - (1 - p0 * beta) ** k)
            assert analytic_mu(SIParams(p0, beta), k) == pytest.approx(closed, abs=1e-12)
    assert analytic_mu(SIParams(0.02, 0.0), k) == pytest.approx(0.02)


def test_analytic_beta_inverts():
    for k in (3, 6):
        for beta in (0.0, 0.05, 0.2):
            mu = analytic_mu(SIParams(0.01, beta), k)
            assert analytic_beta(mu, 0.01, k) == pytest.approx(beta, abs=1e-9)
    assert analytic_beta(0.001, 0.01, 5) is None


def test_ridge_common_numbers_equal_direct_simulation():
    u = from_nx(nx.gnp_random_graph(80, 0.06, seed=7))
    p0_grid, beta_grid = (0.0, 0.01, 0.05), (0.0, 0.03, 0.2, 1.0)
    totals = _ridge_worker((u.indptr, u.indices, p0_grid, beta_grid, 1500, 11, 0))
    for i, p0 in enumerate(p0_grid):
        for j, beta in enumerate(beta_grid):
            direct = _count_worker((u.indptr, u.indices, p0, beta, 1500, 11, 0)).sum()
            assert totals[i, j] == direct


def _two_graph_dataset():
    graphs = []
    for s in (1, 2):
        h = nx.gnp_random_graph(40, 0.1, seed=s)
        graphs.append(ego(f"{s}_0", [(f"{s}_{a}", f"{s}_{b}") for a, b in h.edges()], extra_nodes=[f"{s}_{i}" for i in range(40)]))
    return plant_synthetic(graphs, SIParams(0.05, 0.2), seed=1)


def test_fit_ridge_is_parallelism_independent():
    d = _two_graph_dataset()
    a = fit_ridge(d, (0.0, 0.05), (0.0, 0.1, 0.2), trials=1200, seed=4, workers=1)
    b = fit_ridge(d, (0.0, 0.05), (0.0, 0.1, 0.2), trials=1200, seed=4, workers=2)
    assert a == b
    assert all(pt.distance == abs(pt.simulated_mu - d.n_banned / d.n_nodes) for pt in a)


def test_ridge_valley_prefers_smaller_beta_on_ties():
    pts = [RidgePoint(SIParams(0.01, b), 0.02, dist, 10) for b, dist in [(0.2, 0.001), (0.1, 0.001), (0.3, 0.005)]]
    pts.append(RidgePoint(SIParams(0.02, 0.0), 0.02, 0.0, 10))
    valley = ridge_valley(pts)
    assert [(p.params.p0, p.params.beta) for p in valley] == [(0.01, 0.1), (0.02, 0.0)]


def test_neighbor_conditional_empirical():
    # banned a-b edge, banned c alone with clean neighbour d
    g = ego("a", [("a", "b"), ("c", "d"), ("b", "d")], banned={"a", "b", "c"})
    # a: 1/1 banned, b: 1 of 2, c: 0 of 1
    assert neighbor_conditional_empirical(PopulationDataset("X", [g])) == pytest.approx(2 / 4)
    with pytest.raises(ValueError):
        neighbor_conditional_empirical(PopulationDataset("X", [ego("a", [("a", "b")])]))


def test_simulated_neighbor_conditional_without_contagion_is_p0():
    h = nx.random_regular_graph(4, 2000, seed=8)
    g = ego("0", [(str(a), str(b)) for a, b in h.edges()])
    d = PopulationDataset("X", [g])
    val = simulated_neighbor_conditional(d, SIParams(0.05, 0.0), trials=200, seed=1)
    assert val == pytest.approx(0.05, abs=0.004)


def test_plant_synthetic_records_truth_and_is_seeded():
    d = _two_graph_dataset()
    assert d.metadata["planted"] == {"p0": 0.05, "beta": 0.2, "seed": 1}
    again = _two_graph_dataset()
    assert [g.n_banned for g in d.graphs] == [g.n_banned for g in again.graphs]
    for g in d.graphs:
        for node in g.nodes.values():
            assert node.bans in (BANNED, type(BANNED)())


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2500), st.integers(0, 2**32 - 1))
def test_counts_independent_of_chunk_layout(trials, seed):
    u = HOUSE
    p = SIParams(0.2, 0.3)
    full = si_counts(u, p, trials, seed)
    assert len(full) == trials
    assert np.all((full >= 0) & (full <= u.n))
    # a prefix of the trials reproduces the first chunks exactly
    k = min(trials, 1000)
    assert np.array_equal(si_counts(u, p, k, seed), full[:k])
