"""Depth-limited snowball sampling of interaction ego-graphs.

Nodes at depth < ``expand_depth`` are expanded (their partners join the
graph); nodes at depth ``expand_depth`` are still queried, but only to record
edges towards nodes already sampled. With the default fanout of 33 this caps
a graph at 1 + 33 + 33**2 = 1123 nodes.

Edges are stored as (queried user, partner).
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol

import numpy as np

from .graph import BanProfile, EgoGraph, Node, PopulationDataset

DEFAULT_FANOUT = 33
DEFAULT_DEPTH = 2


class UnknownUser(KeyError):
    pass


class SamplingError(RuntimeError):
    pass


class InteractionSource(Protocol):
    def neighbors_of(self, user: str, fanout: int) -> list[str]:
        """Up to ``fanout`` distinct partners of ``user``, newest interaction first."""
        ...


def max_nodes(fanout: int = DEFAULT_FANOUT) -> int:
    return 1 + fanout + fanout**2


def max_edges(fanout: int = DEFAULT_FANOUT) -> int:
    return fanout + (1 + fanout) * fanout + fanout**2


def _clean(user: str, partners: Iterable[str], fanout: int) -> list[str]:
    out, seen = [], set()
    for p in partners:
        if p == user or p in seen:
            continue
        seen.add(p)
        out.append(p)
        if len(out) == fanout:
            break
    return out


def sample_ego(
    source: InteractionSource,
    landmark: str,
    fanout: int = DEFAULT_FANOUT,
    expand_depth: int = DEFAULT_DEPTH,
    crawl_time: str | None = None,
    bans: Callable[[str], BanProfile] | None = None,
) -> EgoGraph:
    """BFS ego-graph around ``landmark``.

    ``bans`` optionally annotates each sampled user (e.g. a detector call).
    """
    try:
        first = source.neighbors_of(landmark, fanout)
    except UnknownUser as exc:
        raise SamplingError(f"landmark {landmark!r} cannot be resolved") from exc

    depth = {landmark: 0}
    edges: list[tuple[str, str]] = []
    queue = deque([landmark])
    while queue:
        user = queue.popleft()
        if user == landmark:
            partners = first
        else:
            try:
                partners = source.neighbors_of(user, fanout)
            except UnknownUser:
                partners = []
        for p in _clean(user, partners, fanout):
            if p not in depth:
                if depth[user] >= expand_depth:
                    continue
                depth[p] = depth[user] + 1
                queue.append(p)
            edges.append((user, p))
    nodes = [Node(nid, bans(nid) if bans else BanProfile()) for nid in depth]
    return EgoGraph.build(landmark, nodes, edges, crawl_time)


def crawl_population(
    source: InteractionSource,
    landmarks: Iterable[str],
    fanout: int = DEFAULT_FANOUT,
    expand_depth: int = DEFAULT_DEPTH,
    name: str = "RANDOM",
    bans: Callable[[str], BanProfile] | None = None,
    crawl_time: str | None = None,
) -> PopulationDataset:
    """One ego-graph per landmark; failures are recorded and skipped.

    ``metadata["singletons"]`` lists landmarks whose graph is a lone node, left
    for :func:`shadowban.ingest.filter_suitable` to drop.
    """
    graphs, failures, singletons = [], {}, []
    for lm in landmarks:
        try:
            g = sample_ego(source, lm, fanout, expand_depth, crawl_time, bans)
        except (SamplingError, OSError) as exc:
            failures[lm] = str(exc)
            continue
        if len(g) == 1:
            singletons.append(lm)
        graphs.append(g)
    meta = {"fanout": fanout, "expand_depth": expand_depth, "failures": failures, "singletons": singletons}
    return PopulationDataset(name, graphs, meta)


class DictSource:
    """Source backed by explicit, already ordered partner lists."""

    def __init__(self, partners: dict[str, list[str]], strict: bool = False):
        self.partners = partners
        self.strict = strict

    def neighbors_of(self, user: str, fanout: int) -> list[str]:
        if user not in self.partners:
            if self.strict:
                raise UnknownUser(user)
            return []
        return _clean(user, self.partners[user], fanout)

    @classmethod
    def from_dataset(cls, d: PopulationDataset) -> "DictSource":
        partners: dict[str, list[str]] = {}
        for g in d.graphs:
            for nid in g.nodes:
                partners.setdefault(nid, [])
            for a, b in g.edges:
                if b not in partners[a]:
                    partners[a].append(b)
        return cls(partners)


class CompleteSource:
    """Everybody interacts with everybody in a huge universe of users.

    Each user ranks all others by a private pseudo-random recency order, so the
    first ``fanout`` partners of distinct users are almost surely disjoint and
    samples reach the maximal size.
    """

    def __init__(self, seed: int = 0, universe: int = 2**48):
        self.seed = seed
        self.universe = universe

    def neighbors_of(self, user: str, fanout: int) -> list[str]:
        rng = random.Random(f"complete:{self.seed}:{user}")
        out: list[str] = []
        while len(out) < fanout:
            cand = f"c{rng.randrange(self.universe)}"
            if cand != user and cand not in out:
                out.append(cand)
        return out


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix64 finaliser on uint64 arrays (wrapping arithmetic)
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def _uniform(*key) -> np.ndarray:
    """Deterministic U[0,1) values hashed from integer keys (scalars or arrays)."""
    h = np.zeros(np.broadcast(*[np.asarray(k) for k in key]).shape, dtype=np.uint64)
    for k in key:
        h = _mix(h ^ np.asarray(k).astype(np.uint64))
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


@dataclass
class SyntheticWorld:
    """Lazily generated interaction graph over ``n_users`` accounts.

    Users are silent (no interactions), quiet (1 to 3 partners) or active
    (``active_partners`` partners). Partners are drawn among non-silent users,
    from the user's own community with probability ``locality`` and from the
    whole world otherwise. Nothing is stored; every answer is a hash of
    ``seed`` and the user index.
    """

    n_users: int = 1_000_000
    seed: int = 0
    silent: float = 0.6
    quiet: float = 0.1
    community: int = 110
    locality: float = 0.58
    active_partners: int = 40

    def _index(self, user: str) -> int:
        if not user.startswith("u") or not user[1:].isdigit():
            raise UnknownUser(user)
        i = int(user[1:])
        if i >= self.n_users:
            raise UnknownUser(user)
        return i

    def user(self, i: int) -> str:
        return f"u{i}"

    def activity(self, i) -> np.ndarray:
        return _uniform(self.seed, 1, i)

    def is_silent(self, i) -> np.ndarray:
        return self.activity(i) < self.silent

    def neighbors_of(self, user: str, fanout: int) -> list[str]:
        i = self._index(user)
        a = float(self.activity(i))
        if a < self.silent:
            return []
        if a < self.silent + self.quiet:
            k = 1 + int(float(_uniform(self.seed, 2, i)) * 3)
        else:
            k = self.active_partners
        k = min(k, fanout)
        base = (i // self.community) * self.community
        width = min(self.community, self.n_users - base)
        out: list[int] = []
        for rnd in range(1, 50):
            draw = np.arange(4 * k) + rnd * 1_000_003
            local = _uniform(self.seed, 3, i, draw) < self.locality
            near = base + (_uniform(self.seed, 4, i, draw) * width).astype(np.int64)
            far = (_uniform(self.seed, 5, i, draw) * self.n_users).astype(np.int64)
            cand = np.where(local, near, far)
            cand = cand[(cand != i) & ~self.is_silent(cand)]
            for j in cand.tolist():
                if j not in out:
                    out.append(j)
                    if len(out) == k:
                        return [self.user(j) for j in out]
        return [self.user(j) for j in out]

    def landmarks(self, count: int, seed: int = 0, active_only: bool = True) -> list[str]:
        out: list[str] = []
        seen = set()
        draw = 0
        while len(out) < count:
            draw += 1
            i = int(float(_uniform(self.seed, 6, seed, draw)) * self.n_users)
            if i in seen or (active_only and self.is_silent(i)):
                continue
            seen.add(i)
            out.append(self.user(i))
        return out


def synthetic_population(count: int, seed: int = 0, world: SyntheticWorld | None = None,
                         fanout: int = DEFAULT_FANOUT) -> PopulationDataset:
    """``count`` suitable ego-graphs sampled from a synthetic world.

    Size profile is bimodal: quiet landmarks give graphs of tens of nodes,
    active ones graphs near the 1123-node cap.
    """
    world = world or SyntheticWorld(seed=seed)
    d = crawl_population(world, world.landmarks(count, seed), fanout=fanout, name="SYNTHETIC")
    d.metadata["world"] = {
        "n_users": world.n_users,
        "seed": world.seed,
        "silent": world.silent,
        "quiet": world.quiet,
        "community": world.community,
        "locality": world.locality,
        "active_partners": world.active_partners,
    }
    return d
