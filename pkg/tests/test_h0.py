import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import ego
from shadowban.graph import PopulationDataset
from shadowban.h0 import (
    LN10,
    binomial_logpmf_all,
    dataset_test,
    estimate_mu,
    h0_log_p_value,
    h0_log_point_prob,
    h0_p_value,
    h0_point_prob,
    h0_randomized_p_value,
    plant_uniform,
    rank_unlikely,
)


def exact_pmf(n, s, mu):
    m = Fraction(mu)
    return math.comb(n, s) * m**s * (1 - m) ** (n - s)


@pytest.mark.parametrize("mu", [0.1, 0.5, 0.9])
def test_pmf_matches_rational_enumeration(mu):
    for n in range(31):
        for s in range(n + 1):
            assert h0_point_prob(n, s, mu) == pytest.approx(float(exact_pmf(n, s, mu)), rel=1e-12, abs=0)


def test_table_magnitudes():
    assert -316.4 <= h0_log_point_prob(703, 319, 0.0234) / LN10 <= -314.4
    assert -262.2 <= h0_log_point_prob(605, 268, 0.0234) / LN10 <= -260.2


def test_degenerate_mu():
    assert h0_point_prob(10, 0, 0.0) == 1.0
    assert h0_point_prob(10, 1, 0.0) == 0.0
    assert h0_point_prob(10, 10, 1.0) == 1.0
    assert h0_point_prob(0, 0, 0.3) == 1.0


@pytest.mark.parametrize("n,s,mu", [(-1, 0, 0.1), (5, 6, 0.1), (5, -1, 0.1), (5, 1, 1.5), (5, 1, float("nan"))])
def test_invalid_arguments(n, s, mu):
    with pytest.raises(ValueError):
        h0_log_point_prob(n, s, mu)


def test_pmf_sums_to_one():
    for n, mu in [(1, 0.3), (50, 0.0234), (700, 0.0234), (1123, 0.5)]:
        assert np.exp(binomial_logpmf_all(n, mu)).sum() == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("n,s,mu", [(20, 3, 0.1), (20, 10, 0.5), (703, 30, 0.0234), (100, 0, 0.0234), (50, 49, 0.9)])
def test_p_value_matches_scipy(n, s, mu):
    ref = stats.binomtest(s, n, mu, alternative="two-sided").pvalue
    assert h0_p_value(n, s, mu) == pytest.approx(ref, rel=1e-6)


def test_p_value_in_log_space_for_extreme_graphs():
    lp = h0_log_p_value(703, 319, 0.0234)
    assert math.isfinite(lp) and lp / LN10 < -300


def test_estimate_mu_and_ranking(small_dataset):
    assert estimate_mu(small_dataset) == pytest.approx(3 / 8)
    with pytest.raises(ValueError):
        estimate_mu(PopulationDataset("X", []))
    res = dataset_test(small_dataset, 0.1)
    assert [r.landmark for r in res] == ["a", "x"]
    top = rank_unlikely(small_dataset, 0.1, k=1)
    assert len(top) == 1
    assert top[0].log_point_prob == min(r.log_point_prob for r in res)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 200), st.floats(0.001, 0.999), st.data())
def test_p_value_bounds(n, mu, data):
    s = data.draw(st.integers(0, n))
    p = h0_p_value(n, s, mu)
    assert h0_point_prob(n, s, mu) <= p * (1 + 1e-9) + 1e-300
    assert 0.0 <= p <= 1.0


def test_randomized_p_value_is_uniform_under_null():
    rng = np.random.default_rng(7)
    n, mu = 60, 0.05
    s = rng.binomial(n, mu, size=4000)
    u = rng.random(4000)
    pv = np.array([h0_randomized_p_value(n, int(k), mu, float(v)) for k, v in zip(s, u)])
    assert stats.kstest(pv, "uniform").pvalue > 0.001


def test_plant_uniform_rate(rng):
    g = ego("a", [(f"v{i}", f"v{i+1}") for i in range(2000)])
    d = plant_uniform([g], 0.1, seed=3)
    assert d.graphs[0].edges == g.edges
    assert abs(d.n_banned / d.n_nodes - 0.1) < 4 * math.sqrt(0.09 / d.n_nodes)
    assert plant_uniform([g], 0.1, seed=3).n_banned == d.n_banned
