"""Ego-graph data model and descriptive statistics over ban-annotated graphs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

BAN_TYPES = ("typeahead", "search", "ghost")

POPULATIONS = ("RANDOM", "BOTS", "FAMOUS", "DEPUTEES")


@dataclass(frozen=True)
class BanProfile:
    typeahead: bool = False
    search: bool = False
    ghost: bool = False

    @property
    def banned(self) -> bool:
        # a user counts as shadow banned as soon as one test fires
        return self.typeahead or self.search or self.ghost

    def as_dict(self) -> dict[str, bool]:
        return {"typeahead": self.typeahead, "search": self.search, "ghost": self.ghost}

    @classmethod
    def from_dict(cls, d: Mapping[str, bool]) -> "BanProfile":
        return cls(**{k: bool(d.get(k, False)) for k in BAN_TYPES})

    @classmethod
    def all_combinations(cls) -> list["BanProfile"]:
        return [cls(bool(i & 1), bool(i & 2), bool(i & 4)) for i in range(8)]


@dataclass(frozen=True)
class Node:
    id: str
    bans: BanProfile = BanProfile()
    features: Mapping[str, float | int | bool] | None = None

    @property
    def banned(self) -> bool:
        return self.bans.banned


@dataclass(frozen=True)
class UndirectedGraph:
    """Integer-indexed symmetric adjacency in CSR form.

    ``ids[i]`` is the node id of row ``i``; ``banned[i]`` its observed status.
    """

    ids: tuple[str, ...]
    indptr: np.ndarray
    indices: np.ndarray
    banned: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    @cached_property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        data = np.ones(len(self.indices), dtype=np.float64)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def adjacency(self) -> dict[str, set[str]]:
        return {
            self.ids[i]: {self.ids[j] for j in self.neighbors(i)} for i in range(self.n)
        }

    @classmethod
    def from_edges(cls, n: int, pairs: Iterable[tuple[int, int]], banned=None) -> "UndirectedGraph":
        """Build from integer endpoint pairs; duplicates and both orientations collapse."""
        und = {(min(a, b), max(a, b)) for a, b in pairs if a != b}
        if und:
            arr = np.array(sorted(und), dtype=np.int64)
            rows = np.concatenate([arr[:, 0], arr[:, 1]])
            cols = np.concatenate([arr[:, 1], arr[:, 0]])
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        indptr = np.cumsum(indptr)
        if banned is None:
            banned = np.zeros(n, dtype=bool)
        return cls(
            ids=tuple(str(i) for i in range(n)),
            indptr=indptr,
            indices=cols.astype(np.int64),
            banned=np.asarray(banned, dtype=bool),
        )


@dataclass(frozen=True)
class EgoGraph:
    landmark: str
    nodes: Mapping[str, Node]
    edges: tuple[tuple[str, str], ...] = ()
    crawl_time: str | None = None

    @classmethod
    def build(
        cls,
        landmark: str,
        nodes: Iterable[Node | str],
        edges: Iterable[tuple[str, str]] = (),
        crawl_time: str | None = None,
    ) -> "EgoGraph":
        table: dict[str, Node] = {}
        for node in nodes:
            if isinstance(node, str):
                node = Node(node)
            table[node.id] = node
        return cls(landmark, table, tuple((str(a), str(b)) for a, b in edges), crawl_time)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def n_banned(self) -> int:
        return sum(1 for v in self.nodes.values() if v.banned)

    def with_bans(self, bans: Mapping[str, BanProfile]) -> "EgoGraph":
        nodes = {
            nid: Node(nid, bans.get(nid, node.bans), node.features)
            for nid, node in self.nodes.items()
        }
        return EgoGraph(self.landmark, nodes, self.edges, self.crawl_time)

    def violations(self) -> list[str]:
        out = []
        if not self.landmark:
            out.append("empty landmark id")
        if not self.nodes:
            out.append(f"graph {self.landmark!r}: no nodes")
        elif self.landmark not in self.nodes:
            out.append(f"graph {self.landmark!r}: landmark not among nodes")
        for nid, node in self.nodes.items():
            if not nid:
                out.append(f"graph {self.landmark!r}: empty node id")
            if node.id != nid:
                out.append(f"graph {self.landmark!r}: node key {nid!r} != id {node.id!r}")
        for a, b in self.edges:
            if a == b:
                out.append(f"graph {self.landmark!r}: self-loop on node {a!r}")
                continue
            for end in (a, b):
                if end not in self.nodes:
                    out.append(f"graph {self.landmark!r}: edge ({a!r}, {b!r}) references unknown node {end!r}")
        return out

    @cached_property
    def _undirected(self) -> UndirectedGraph:
        ids = tuple(self.nodes)
        index = {nid: i for i, nid in enumerate(ids)}
        g = UndirectedGraph.from_edges(
            len(ids),
            ((index[a], index[b]) for a, b in self.edges),
            banned=[self.nodes[nid].banned for nid in ids],
        )
        return UndirectedGraph(ids, g.indptr, g.indices, g.banned)

    def undirected(self) -> UndirectedGraph:
        return self._undirected


@dataclass
class PopulationDataset:
    name: str
    graphs: list[EgoGraph]
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    @property
    def n_nodes(self) -> int:
        return sum(len(g) for g in self.graphs)

    @property
    def n_banned(self) -> int:
        return sum(g.n_banned for g in self.graphs)

    def unique_nodes(self) -> dict[str, Node]:
        """First occurrence of every node id across the dataset."""
        seen: dict[str, Node] = {}
        for g in self.graphs:
            for nid, node in g.nodes.items():
                seen.setdefault(nid, node)
        return seen


def undirected_view(g: EgoGraph) -> dict[str, set[str]]:
    return g.undirected().adjacency()


def sb_fraction(g: EgoGraph) -> float:
    if len(g) == 0:
        raise ValueError(f"graph {g.landmark!r} has no nodes")
    return g.n_banned / len(g)


def _group_means(values: list[np.ndarray], masks: list[np.ndarray]) -> tuple[float | None, float | None]:
    v = np.concatenate(values) if values else np.zeros(0)
    m = np.concatenate(masks) if masks else np.zeros(0, dtype=bool)
    banned = float(v[m].mean()) if m.any() else None
    clean = float(v[~m].mean()) if (~m).any() else None
    return banned, clean


def degree_by_ban_status(d: PopulationDataset) -> tuple[float | None, float | None]:
    """Mean undirected degree of banned and of non-banned nodes.

    An empty group yields ``None`` rather than 0.
    """
    if not d.graphs:
        raise ValueError("empty dataset")
    degs, masks = [], []
    for g in d.graphs:
        u = g.undirected()
        degs.append(u.degree.astype(float))
        masks.append(u.banned)
    return _group_means(degs, masks)


def neighbor_sb_fraction(d: PopulationDataset) -> tuple[float | None, float | None]:
    """Mean fraction of banned neighbours, for banned and non-banned nodes.

    Degree-0 nodes have no defined fraction and are left out.
    """
    if not d.graphs:
        raise ValueError("empty dataset")
    fracs, masks = [], []
    for g in d.graphs:
        u = g.undirected()
        deg = u.degree
        keep = deg > 0
        banned_nb = u.matrix @ u.banned.astype(float)
        fracs.append(banned_nb[keep] / deg[keep])
        masks.append(u.banned[keep])
    return _group_means(fracs, masks)


def local_clustering(u: UndirectedGraph) -> np.ndarray:
    a = u.matrix
    # triangles through i = (A^3)_ii / 2
    tri = np.asarray((a @ a).multiply(a).sum(axis=1)).ravel() / 2.0
    deg = u.degree.astype(float)
    pairs = deg * (deg - 1) / 2.0
    out = np.zeros(u.n)
    ok = deg >= 2
    out[ok] = tri[ok] / pairs[ok]
    return out


def clustering_avg(g: EgoGraph) -> float:
    u = g.undirected()
    if u.n == 0:
        return 0.0
    return float(local_clustering(u).mean())


def k_core_nodes(u: UndirectedGraph, k: int) -> np.ndarray:
    """Boolean mask of nodes in the k-core, by iterative peeling."""
    deg = u.degree.copy()
    alive = np.ones(u.n, dtype=bool)
    stack = [i for i in range(u.n) if deg[i] < k]
    for i in stack:
        alive[i] = False
    while stack:
        i = stack.pop()
        for j in u.neighbors(i):
            if alive[j]:
                deg[j] -= 1
                if deg[j] < k:
                    alive[j] = False
                    stack.append(j)
    return alive


def two_core_size(g: EgoGraph) -> int:
    return int(k_core_nodes(g.undirected(), 2).sum())


@dataclass
class CoOccurrence:
    totals: dict[str, int]
    # conditional[i][j] = P(ban j | ban i), None when ban i never occurs
    conditional: dict[str, dict[str, float | None]]
    n_users: int
    n_banned: int


def ban_cooccurrence(d: PopulationDataset) -> CoOccurrence:
    users = d.unique_nodes()
    totals = {t: 0 for t in BAN_TYPES}
    joint = {a: {b: 0 for b in BAN_TYPES} for a in BAN_TYPES}
    n_banned = 0
    for node in users.values():
        flags = node.bans.as_dict()
        n_banned += node.banned
        for a in BAN_TYPES:
            if not flags[a]:
                continue
            totals[a] += 1
            for b in BAN_TYPES:
                joint[a][b] += flags[b]
    cond = {
        a: {b: (joint[a][b] / totals[a] if totals[a] else None) for b in BAN_TYPES}
        for a in BAN_TYPES
    }
    return CoOccurrence(totals, cond, len(users), n_banned)


def mean_degree(d: PopulationDataset) -> float:
    """Node-weighted mean undirected degree over the whole dataset."""
    total = sum(int(g.undirected().degree.sum()) for g in d.graphs)
    n = d.n_nodes
    return total / n if n else math.nan


def topology_summary(d: PopulationDataset) -> dict:
    """Per-population topology table: sizes, degree, clustering, 2-core."""
    if not d.graphs:
        return {"graphs": 0, "total_nodes": 0}
    clust = [clustering_avg(g) for g in d.graphs]
    cores = [two_core_size(g) for g in d.graphs]
    degs = [float(g.undirected().degree.mean()) for g in d.graphs]
    return {
        "graphs": len(d.graphs),
        "total_nodes": d.n_nodes,
        "degree_avg": float(np.mean(degs)),
        "degree_avg_node_weighted": mean_degree(d),
        "clustering_avg": float(np.mean(clust)),
        "two_core_size_avg": float(np.mean(cores)),
    }


def ban_summary(d: PopulationDataset) -> dict:
    if not d.graphs:
        raise ValueError("empty dataset")
    deg_b, deg_n = degree_by_ban_status(d)
    nb_b, nb_n = neighbor_sb_fraction(d)
    return {
        "sb_nodes": d.n_banned,
        "sb_fraction_pooled": d.n_banned / d.n_nodes,
        "sb_fraction_per_graph_avg": float(np.mean([sb_fraction(g) for g in d.graphs])),
        "degree_sb": deg_b,
        "degree_not_sb": deg_n,
        "sb_neighbor_fraction_sb": nb_b,
        "sb_neighbor_fraction_not_sb": nb_n,
    }
