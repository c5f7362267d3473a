"""Uniform-bug hypothesis: every user banned independently with probability mu.

Probabilities here routinely fall below 1e-300, so everything is computed as
natural logs and only exponentiated at the edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .graph import BanProfile, EgoGraph, PopulationDataset
from .parallel import stream

LN10 = math.log(10.0)

# relative slack when deciding pmf(k) <= pmf(s) for the two-sided p-value
_TIE_RTOL = 1e-7


@dataclass(frozen=True)
class H0Model:
    mu: float

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")


@dataclass(frozen=True)
class GraphTestResult:
    landmark: str
    n: int
    s: int
    log_point_prob: float
    log_p_two_sided: float

    @property
    def point_prob(self) -> float:
        return math.exp(self.log_point_prob)

    @property
    def p_two_sided(self) -> float:
        return math.exp(self.log_p_two_sided)

    @property
    def point_prob_log10(self) -> float:
        return self.log_point_prob / LN10

    @property
    def ratio(self) -> float:
        return self.s / self.n


def _check(n: int, s: int, mu: float) -> None:
    if n < 0 or not 0 <= s <= n:
        raise ValueError(f"need 0 <= s <= n, got n={n}, s={s}")
    if not 0.0 <= mu <= 1.0 or math.isnan(mu):
        raise ValueError(f"mu must lie in [0, 1], got {mu}")


def estimate_mu(d: PopulationDataset) -> float:
    """Pooled fraction of banned nodes over every graph of ``d``."""
    if not d.graphs or d.n_nodes == 0:
        raise ValueError("cannot estimate mu on an empty dataset")
    return d.n_banned / d.n_nodes


def h0_log_point_prob(n: int, s: int, mu: float) -> float:
    """Natural log of the Binomial(n, mu) pmf at s."""
    _check(n, s, mu)
    if mu == 0.0:
        return 0.0 if s == 0 else -math.inf
    if mu == 1.0:
        return 0.0 if s == n else -math.inf
    return (
        math.lgamma(n + 1)
        - math.lgamma(s + 1)
        - math.lgamma(n - s + 1)
        + s * math.log(mu)
        + (n - s) * math.log1p(-mu)
    )


def h0_point_prob(n: int, s: int, mu: float) -> float:
    return math.exp(h0_log_point_prob(n, s, mu))


def binomial_logpmf_all(n: int, mu: float) -> np.ndarray:
    """Log pmf of Binomial(n, mu) at every k in 0..n."""
    k = np.arange(n + 1)
    if mu == 0.0 or mu == 1.0:
        out = np.full(n + 1, -np.inf)
        out[0 if mu == 0.0 else n] = 0.0
        return out
    return (
        gammaln(n + 1)
        - gammaln(k + 1)
        - gammaln(n - k + 1)
        + k * math.log(mu)
        + (n - k) * math.log1p(-mu)
    )


def h0_log_p_value(n: int, s: int, mu: float) -> float:
    """Log of the two-sided exact binomial p-value.

    Sums the pmf over every outcome no more likely than ``s``.
    """
    _check(n, s, mu)
    logp = binomial_logpmf_all(n, mu)
    threshold = logp[s] + math.log1p(_TIE_RTOL)
    return float(min(0.0, logsumexp(logp[logp <= threshold])))


def h0_p_value(n: int, s: int, mu: float) -> float:
    return math.exp(h0_log_p_value(n, s, mu))


def h0_randomized_p_value(n: int, s: int, mu: float, u: float) -> float:
    """Randomized two-sided p-value; exactly U[0,1] under the null.

    Outcomes strictly less likely than ``s`` count fully, ties count with weight ``u``.
    """
    _check(n, s, mu)
    p = np.exp(binomial_logpmf_all(n, mu))
    tie = np.isclose(p, p[s], rtol=_TIE_RTOL, atol=0.0)
    below = (p < p[s]) & ~tie
    return float(p[below].sum() + u * p[tie].sum())


def graph_test(g: EgoGraph, mu: float) -> GraphTestResult:
    n, s = len(g), g.n_banned
    return GraphTestResult(g.landmark, n, s, h0_log_point_prob(n, s, mu), h0_log_p_value(n, s, mu))


def dataset_test(d: PopulationDataset, mu: float) -> list[GraphTestResult]:
    return [graph_test(g, mu) for g in d.graphs]


def rank_unlikely(d: PopulationDataset, mu: float, k: int = 5) -> list[GraphTestResult]:
    """The ``k`` graphs least probable under H0(mu), most unlikely first."""
    results = dataset_test(d, mu)
    results.sort(key=lambda r: (r.log_point_prob, r.landmark))
    return results[:k]


def plant_uniform(
    topologies: PopulationDataset | list[EgoGraph],
    mu: float,
    seed: int,
    name: str = "SYNTHETIC",
    ban: BanProfile = BanProfile(typeahead=True),
) -> PopulationDataset:
    """Ban every node independently with probability ``mu``; record ground truth."""
    H0Model(mu)
    graphs = topologies.graphs if isinstance(topologies, PopulationDataset) else list(topologies)
    clean = BanProfile()
    planted = []
    for i, g in enumerate(graphs):
        ids = list(g.undirected().ids)
        banned = stream(seed, i).random(len(ids)) < mu
        planted.append(g.with_bans({nid: (ban if b else clean) for nid, b in zip(ids, banned)}))
    return PopulationDataset(name, planted, {"planted": {"mu": mu, "seed": seed}})


def results_to_rows(results: list[GraphTestResult]) -> list[list]:
    return [
        [r.landmark, r.n, r.s, f"{r.point_prob_log10:.6f}", f"{r.p_two_sided:.6e}"]
        for r in results
    ]


CSV_HEADER = ["landmark", "n", "s", "point_prob_log10", "p_value"]
