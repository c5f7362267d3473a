"""Topological hypothesis: one-step SI contamination on ego-graphs.

Every node is initially infected with probability ``p0``; each initially
infected node then contaminates each neighbour independently with probability
``beta``. Secondary infections do not spread further. ``beta = 0`` reduces to
the uniform model with ``mu = p0``.

Two simulation routes are provided. :func:`si_simulate` draws one coin per
(infected node, neighbour) pair. The batched kernels draw one coin per node
with success probability ``1 - (1 - beta)**j`` where ``j`` is its number of
initially infected neighbours; given the initial set the two are equal in
distribution, and the batched form is what makes 10^4-trial estimates cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .graph import BanProfile, EgoGraph, PopulationDataset, UndirectedGraph, mean_degree
from .parallel import exact_sum, pmap, stream, trial_chunks

DEFAULT_P0_GRID = tuple(round(0.0025 * i, 6) for i in range(11))
DEFAULT_BETA_GRID = tuple(round(0.01 * i, 6) for i in range(26))
DEFAULT_RIDGE_TRIALS = 100


@dataclass(frozen=True)
class SIParams:
    p0: float
    beta: float

    def __post_init__(self):
        for name in ("p0", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class RidgePoint:
    params: SIParams
    simulated_mu: float
    distance: float
    trials: int


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, tuple):
        return stream(*seed)
    return np.random.default_rng(seed)


def _csr(indptr: np.ndarray, indices: np.ndarray) -> sparse.csr_matrix:
    n = len(indptr) - 1
    return sparse.csr_matrix((np.ones(len(indices)), indices, indptr), shape=(n, n))


def si_simulate(g: EgoGraph | UndirectedGraph, params: SIParams, rng_seed) -> np.ndarray:
    """One SI realisation with an explicit coin per (infected node, neighbour) pair.

    Returns a boolean array aligned with ``g.undirected().ids``.
    """
    u = g.undirected() if isinstance(g, EgoGraph) else g
    rng = _rng(rng_seed)
    initial = rng.random(u.n) < params.p0
    src = np.repeat(np.arange(u.n), u.degree)
    fire = initial[src] & (rng.random(len(u.indices)) < params.beta)
    banned = initial.copy()
    banned[u.indices[fire]] = True
    return banned


def _si_batch(a: sparse.csr_matrix, n: int, p0: float, beta: float, size: int, rng) -> np.ndarray:
    """``size`` independent realisations as a (size, n) boolean matrix."""
    initial = rng.random((size, n)) < p0
    infected_nb = (a @ initial.T.astype(np.float64)).T
    u = rng.random((size, n))
    if beta < 1:
        hit = u < -np.expm1(infected_nb * math.log1p(-beta))
    else:
        hit = infected_nb > 0
    return initial | hit


def si_sample(u: UndirectedGraph, params: SIParams, trials: int, seed: int, graph_index: int = 0) -> np.ndarray:
    """(trials, n) matrix of banned indicators, streams keyed by chunk."""
    a = u.matrix
    out = [
        _si_batch(a, u.n, params.p0, params.beta, size, stream(seed, graph_index, ci))
        for ci, size in trial_chunks(trials)
    ]
    return np.vstack(out) if out else np.zeros((0, u.n), dtype=bool)


def _count_worker(args) -> np.ndarray:
    indptr, indices, p0, beta, trials, seed, gi = args
    n = len(indptr) - 1
    a = _csr(indptr, indices)
    parts = [
        _si_batch(a, n, p0, beta, size, stream(seed, gi, ci)).sum(axis=1)
        for ci, size in trial_chunks(trials)
    ]
    return np.concatenate(parts).astype(np.int64)


def si_counts(u: UndirectedGraph, params: SIParams, trials: int, seed: int, graph_index: int = 0) -> np.ndarray:
    """Banned count of each of ``trials`` realisations."""
    return _count_worker((u.indptr, u.indices, params.p0, params.beta, trials, seed, graph_index))


def analytic_mu(params: SIParams, k: int) -> float:
    """Banned probability on a k-regular graph: p0 + (1 - p0) * p1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    p0, beta = params.p0, params.beta
    p1 = sum(
        math.comb(k, v) * p0**v * (1 - p0) ** (k - v) * (1 - (1 - beta) ** v)
        for v in range(1, k + 1)
    )
    return p0 + (1 - p0) * p1


def analytic_beta(mu: float, p0: float, k: int, tol: float = 1e-12) -> float | None:
    """beta solving analytic_mu(p0, beta, k) = mu, or None if out of [0, 1]."""
    lo, hi = 0.0, 1.0
    if analytic_mu(SIParams(p0, lo), k) > mu or analytic_mu(SIParams(p0, hi), k) < mu:
        return None
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if analytic_mu(SIParams(p0, mid), k) < mu:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def default_k(d: PopulationDataset) -> int:
    return max(1, round(mean_degree(d)))


def expected_fraction(d: PopulationDataset, params: SIParams) -> float:
    """Exact expected pooled banned fraction under SI on the topologies of ``d``."""
    total = 0.0
    for g in d.graphs:
        deg = g.undirected().degree
        total += float(np.sum(1 - (1 - params.p0) * (1 - params.p0 * params.beta) ** deg))
    return total / d.n_nodes


def neighbor_conditional_empirical(d: PopulationDataset) -> float:
    """Share of edge endpoints next to a banned node that are banned themselves."""
    num = den = 0
    for g in d.graphs:
        u = g.undirected()
        b = u.banned
        nb = u.matrix @ b.astype(np.float64)
        num += int(round(nb[b].sum()))
        den += int(u.degree[b].sum())
    if den == 0:
        raise ValueError("no edge is incident to a banned node")
    return num / den


def neighbor_conditional_analytic(params: SIParams) -> float:
    return params.p0 + (1 - params.p0) * params.beta


def _graph_args(d: PopulationDataset):
    for i, g in enumerate(d.graphs):
        u = g.undirected()
        yield i, u.indptr, u.indices


def _ridge_worker(args) -> np.ndarray:
    indptr, indices, p0_grid, beta_grid, trials, seed, gi = args
    n = len(indptr) - 1
    a = _csr(indptr, indices)
    beta_grid = np.asarray(beta_grid)
    totals = np.zeros((len(p0_grid), len(beta_grid)), dtype=np.int64)
    for ci, size in trial_chunks(trials):
        rng = stream(seed, gi, ci)
        # common random numbers across the grid: same draws as _si_batch
        u_init = rng.random((size, n))
        u_cont = rng.random((size, n))
        for i, p0 in enumerate(p0_grid):
            initial = u_init < p0
            infected_nb = (a @ initial.T.astype(np.float64)).T
            touched = (infected_nb > 0) & ~initial
            j = infected_nb[touched]
            # node is contaminated iff beta > 1 - (1 - u)^(1/j)
            threshold = np.sort(-np.expm1(np.log1p(-u_cont[touched]) / j))
            totals[i] += int(initial.sum()) + np.searchsorted(threshold, beta_grid, side="left")
    return totals


def fit_ridge(
    d: PopulationDataset,
    p0_grid=DEFAULT_P0_GRID,
    beta_grid=DEFAULT_BETA_GRID,
    trials: int = DEFAULT_RIDGE_TRIALS,
    seed: int = 0,
    workers: int | None = 1,
    mu_hat: float | None = None,
) -> list[RidgePoint]:
    """Simulated pooled banned fraction and its distance to mu_hat at every grid point."""
    if not p0_grid or not beta_grid:
        raise ValueError("grids must be non-empty")
    if mu_hat is None:
        mu_hat = d.n_banned / d.n_nodes
    jobs = [
        (indptr, indices, tuple(p0_grid), tuple(beta_grid), trials, seed, i)
        for i, indptr, indices in _graph_args(d)
    ]
    totals = exact_sum(pmap(_ridge_worker, jobs, workers))
    denom = trials * d.n_nodes
    out = []
    for i, p0 in enumerate(p0_grid):
        for j, beta in enumerate(beta_grid):
            sim = int(totals[i, j]) / denom
            out.append(RidgePoint(SIParams(p0, beta), sim, abs(sim - mu_hat), trials))
    return out


def ridge_valley(ridge: list[RidgePoint]) -> list[RidgePoint]:
    """The minimal-distance point for each p0 (ties go to the smaller beta)."""
    best: dict[float, RidgePoint] = {}
    for pt in ridge:
        cur = best.get(pt.params.p0)
        key = (pt.distance, pt.params.beta)
        if cur is None or key < (cur.distance, cur.params.beta):
            best[pt.params.p0] = pt
    return [best[p] for p in sorted(best)]


def _cond_worker(args) -> tuple[int, int]:
    indptr, indices, p0, beta, trials, seed, gi = args
    n = len(indptr) - 1
    a = _csr(indptr, indices)
    deg = np.diff(indptr)
    num = den = 0
    for ci, size in trial_chunks(trials):
        b = _si_batch(a, n, p0, beta, size, stream(seed, gi, ci))
        nb = (a @ b.T.astype(np.float64)).T
        num += int(round(nb[b].sum()))
        den += int((b * deg).sum())
    return num, den


def simulated_neighbor_conditional(
    d: PopulationDataset, params: SIParams, trials: int = DEFAULT_RIDGE_TRIALS, seed: int = 0, workers: int | None = 1
) -> float | None:
    jobs = [
        (indptr, indices, params.p0, params.beta, trials, seed, i)
        for i, indptr, indices in _graph_args(d)
    ]
    parts = pmap(_cond_worker, jobs, workers)
    num = sum(p[0] for p in parts)
    den = sum(p[1] for p in parts)
    return num / den if den else None


@dataclass
class BetaSelection:
    params: SIParams
    empirical: float
    # (valley point, simulated neighbour-conditional probability)
    candidates: list[tuple[RidgePoint, float | None]]

    @property
    def ratio(self) -> float | None:
        """How much likelier neighbour contamination is than initial infection."""
        return self.params.beta / self.params.p0 if self.params.p0 else None


def select_beta(
    d: PopulationDataset,
    ridge: list[RidgePoint],
    trials: int = DEFAULT_RIDGE_TRIALS,
    seed: int = 0,
    workers: int | None = 1,
) -> BetaSelection:
    """Pick the valley point whose simulated neighbour-conditional probability
    is closest to the one measured on ``d``."""
    if not ridge:
        raise ValueError("empty ridge")
    empirical = neighbor_conditional_empirical(d)
    candidates = []
    for pt in ridge_valley(ridge):
        sim = simulated_neighbor_conditional(d, pt.params, trials, seed, workers)
        candidates.append((pt, sim))
    scored = [(abs(sim - empirical), pt.params.p0, pt) for pt, sim in candidates if sim is not None]
    if not scored:
        raise ValueError("no valley point produces banned nodes")
    best = min(scored, key=lambda t: (t[0], t[1]))[2]
    return BetaSelection(best.params, empirical, candidates)


def plant_synthetic(
    topologies: PopulationDataset | list[EgoGraph],
    params: SIParams,
    seed: int,
    name: str = "SYNTHETIC",
    ban: BanProfile = BanProfile(typeahead=True),
) -> PopulationDataset:
    """Replace ban statuses by an SI realisation per graph; record ground truth."""
    graphs = topologies.graphs if isinstance(topologies, PopulationDataset) else list(topologies)
    clean = BanProfile()
    planted = []
    for i, g in enumerate(graphs):
        u = g.undirected()
        banned = si_simulate(u, params, stream(seed, i))
        planted.append(g.with_bans({nid: (ban if b else clean) for nid, b in zip(u.ids, banned)}))
    meta = {"planted": {"p0": params.p0, "beta": params.beta, "seed": seed}}
    return PopulationDataset(name, planted, meta)
