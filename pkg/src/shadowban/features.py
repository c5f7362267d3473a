"""Profile features versus ban status: balancing, splitting and a small CART
decision tree with impurity and permutation importances.

Booleans are treated as 0/1. Splits send ``x[feature] <= threshold`` left,
with thresholds at midpoints between consecutive distinct values. Equal Gini
gains are resolved by feature name, then by the smaller threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import PopulationDataset
from .ingest import CANONICAL_FEATURES

_GAIN_EPS = 1e-12


@dataclass(frozen=True)
class LabeledSample:
    features: Mapping[str, float]
    label: bool
    id: str | None = None


def _numeric(v) -> float | None:
    if v is None or isinstance(v, str):
        return None
    x = float(v)
    return None if math.isnan(x) else x


def complete_sample(features: Mapping | None, label: bool, schema: Sequence[str] = CANONICAL_FEATURES,
                    id: str | None = None) -> LabeledSample | None:
    """A LabeledSample restricted to ``schema``, or None if any feature is missing."""
    if not features:
        return None
    out = {}
    for name in schema:
        x = _numeric(features.get(name))
        if x is None:
            return None
        out[name] = x
    return LabeledSample(out, bool(label), id)


def labeled_samples(d: PopulationDataset, schema: Sequence[str] = CANONICAL_FEATURES) -> tuple[list[LabeledSample], int]:
    """One sample per distinct user carrying every schema feature.

    Returns the samples (sorted by user id) and how many users were dropped.
    """
    out, dropped = [], 0
    for nid, node in sorted(d.unique_nodes().items()):
        s = complete_sample(node.features, node.banned, schema, nid)
        if s is None:
            dropped += 1
        else:
            out.append(s)
    return out, dropped


def balance(samples: Sequence[LabeledSample], seed: int) -> list[LabeledSample]:
    """Downsample the majority class uniformly at random; input order is kept."""
    pos = [i for i, s in enumerate(samples) if s.label]
    neg = [i for i, s in enumerate(samples) if not s.label]
    if not pos or not neg:
        raise ValueError("both classes must be non-empty to balance")
    rng = np.random.default_rng(seed)
    k = min(len(pos), len(neg))
    keep = set(pos if len(pos) == k else rng.choice(pos, k, replace=False).tolist())
    keep |= set(neg if len(neg) == k else rng.choice(neg, k, replace=False).tolist())
    return [samples[i] for i in sorted(keep)]


def split(samples: Sequence[LabeledSample], train_fraction: float = 0.8, seed: int = 0,
          stratified: bool = True) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Random train/test partition; with ``stratified`` each class is cut separately."""
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    groups = [[i for i, s in enumerate(samples) if s.label], [i for i, s in enumerate(samples) if not s.label]]
    if not stratified:
        groups = [list(range(len(samples)))]
    train_idx: list[int] = []
    for g in groups:
        perm = rng.permutation(len(g))
        n_train = round(train_fraction * len(g))
        train_idx += [g[j] for j in perm[:n_train]]
    chosen = set(train_idx)
    train = [samples[i] for i in sorted(chosen)]
    test = [samples[i] for i in range(len(samples)) if i not in chosen]
    return train, test


def to_matrix(samples: Sequence[LabeledSample], schema: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([[s.features[f] for f in schema] for s in samples], dtype=np.float64).reshape(len(samples), len(schema))
    y = np.array([s.label for s in samples], dtype=bool)
    return x, y


@dataclass(frozen=True)
class TreeParams:
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: str | int | None = None  # None, "sqrt", "log2" or a count
    max_depth: int | None = None

    def n_features(self, total: int) -> int:
        m = self.max_features
        if m is None:
            return total
        if m == "sqrt":
            return max(1, int(math.sqrt(total)))
        if m == "log2":
            return max(1, int(math.log2(total)))
        if isinstance(m, int) and m >= 1:
            return min(m, total)
        raise ValueError(f"bad max_features {m!r}")


@dataclass
class TreeNode:
    counts: tuple[int, int]  # (negatives, positives)
    impurity: float
    feature: str | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def n(self) -> int:
        return self.counts[0] + self.counts[1]

    @property
    def p_banned(self) -> float:
        return self.counts[1] / self.n

    def as_dict(self) -> dict:
        out = {"counts": list(self.counts), "impurity": self.impurity}
        if not self.is_leaf:
            out.update(feature=self.feature, threshold=self.threshold,
                       left=self.left.as_dict(), right=self.right.as_dict())
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "TreeNode":
        node = cls(tuple(int(c) for c in obj["counts"]), float(obj["impurity"]))
        if "feature" in obj:
            node.feature = str(obj["feature"])
            node.threshold = float(obj["threshold"])
            node.left = cls.from_dict(obj["left"])
            node.right = cls.from_dict(obj["right"])
        return node


def gini(pos: float, n: float) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    return 2.0 * p * (1.0 - p)


def _best_split(col: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[float, float] | None:
    """(weighted child impurity, threshold) of the best cut of one column."""
    order = np.argsort(col, kind="stable")
    xs, ys = col[order], y[order]
    n = len(xs)
    cum_pos = np.cumsum(ys)
    total_pos = cum_pos[-1]
    # candidate cut after position i (left = first i+1 samples)
    i = np.nonzero(xs[1:] > xs[:-1])[0]
    n_left = i + 1
    ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
    i, n_left = i[ok], n_left[ok]
    if len(i) == 0:
        return None
    pl = cum_pos[i] / n_left
    pr = (total_pos - cum_pos[i]) / (n - n_left)
    child = (n_left * 2 * pl * (1 - pl) + (n - n_left) * 2 * pr * (1 - pr)) / n
    j = int(np.argmin(child))
    return float(child[j]), float((xs[i[j]] + xs[i[j] + 1]) / 2)


@dataclass
class TreeModel:
    root: TreeNode
    schema: tuple[str, ...]
    params: TreeParams = field(default_factory=TreeParams)

    def _leaf(self, x: Mapping[str, float]) -> TreeNode:
        node = self.root
        while not node.is_leaf:
            node = node.left if float(x[node.feature]) <= node.threshold else node.right
        return node

    def predict_proba_one(self, x: Mapping[str, float]) -> float:
        return self._leaf(x).p_banned

    def predict_one(self, x: Mapping[str, float]) -> bool:
        return self.predict_proba_one(x) > 0.5

    def predict(self, samples: Iterable[LabeledSample | Mapping[str, float]]) -> list[bool]:
        return [self.predict_one(s.features if isinstance(s, LabeledSample) else s) for s in samples]

    def nodes(self) -> list[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            if not node.is_leaf:
                stack += [node.right, node.left]
        return out

    @property
    def depth(self) -> int:
        best, stack = 0, [(self.root, 0)]
        while stack:
            node, dep = stack.pop()
            best = max(best, dep)
            if not node.is_leaf:
                stack += [(node.left, dep + 1), (node.right, dep + 1)]
        return best

    @property
    def n_leaves(self) -> int:
        return sum(n.is_leaf for n in self.nodes())

    def to_json(self) -> str:
        p = self.params
        return json.dumps({
            "schema": list(self.schema),
            "params": {"min_samples_split": p.min_samples_split, "min_samples_leaf": p.min_samples_leaf,
                       "max_features": p.max_features, "max_depth": p.max_depth},
            "tree": self.root.as_dict(),
        }, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TreeModel":
        obj = json.loads(text)
        model = cls(TreeNode.from_dict(obj["tree"]), tuple(obj["schema"]), TreeParams(**obj["params"]))
        unknown = {n.feature for n in model.nodes() if not n.is_leaf} - set(model.schema)
        if unknown:
            raise ValueError(f"split features missing from schema: {sorted(unknown)}")
        return model


def fit_tree(train: Sequence[LabeledSample], params: TreeParams = TreeParams(), seed: int = 0,
             schema: Sequence[str] | None = None) -> TreeModel:
    """Greedy CART growth on Gini impurity."""
    if not train:
        raise ValueError("empty training set")
    schema = tuple(sorted(schema if schema is not None else train[0].features))
    x, y = to_matrix(train, schema)
    yi = y.astype(np.int64)
    rng = np.random.default_rng(seed)
    n_try = params.n_features(len(schema))
    min_split = max(2, params.min_samples_split)
    min_leaf = max(1, params.min_samples_leaf)

    def make(idx: np.ndarray) -> TreeNode:
        pos = int(yi[idx].sum())
        return TreeNode((len(idx) - pos, pos), gini(pos, len(idx)))

    root = make(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, dep = stack.pop()
        if node.impurity == 0.0 or len(idx) < min_split or (params.max_depth is not None and dep >= params.max_depth):
            continue
        feats = range(len(schema))
        if n_try < len(schema):
            feats = sorted(rng.choice(len(schema), n_try, replace=False).tolist())
        best = None  # (child impurity, feature index, threshold); schema is name-sorted
        for f in feats:
            cut = _best_split(x[idx, f], yi[idx], min_leaf)
            if cut is not None and (best is None or cut[0] < best[0] - _GAIN_EPS):
                best = (cut[0], f, cut[1])
        # zero-gain splits are accepted (XOR-like patterns need them)
        if best is None:
            continue
        _, f, thr = best
        go_left = x[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        node.feature, node.threshold = schema[f], thr
        node.left, node.right = make(li), make(ri)
        stack += [(node.right, ri, dep + 1), (node.left, li, dep + 1)]
    return TreeModel(root, schema, params)


def accuracy(model: TreeModel, samples: Sequence[LabeledSample]) -> float:
    if not samples:
        raise ValueError("no samples")
    pred = model.predict(samples)
    return sum(p == s.label for p, s in zip(pred, samples)) / len(samples)


def _normalize(raw: dict[str, float]) -> dict[str, float]:
    total = sum(raw.values())
    if total <= 0:
        return {k: 0.0 for k in raw}
    return {k: v / total for k, v in raw.items()}


def impurity_importance(model: TreeModel) -> dict[str, float]:
    """Total weighted Gini decrease per feature, normalized to sum 1
    (all zeros for a single-leaf tree)."""
    raw = {f: 0.0 for f in model.schema}
    for node in model.nodes():
        if node.is_leaf:
            continue
        dec = node.n * node.impurity - node.left.n * node.left.impurity - node.right.n * node.right.impurity
        raw[node.feature] += max(0.0, dec)
    return _normalize(raw)


def permutation_importance(model: TreeModel, samples: Sequence[LabeledSample], seed: int = 0,
                           repeats: int = 5) -> dict[str, float]:
    """Mean accuracy drop when one feature column is shuffled, clipped at 0 and normalized."""
    base = accuracy(model, samples)
    rng = np.random.default_rng(seed)
    raw = {}
    for f in model.schema:
        col = [s.features[f] for s in samples]
        drops = []
        for _ in range(repeats):
            perm = rng.permutation(len(col))
            shuffled = [{**s.features, f: col[j]} for s, j in zip(samples, perm)]
            pred = model.predict(shuffled)
            acc = sum(p == s.label for p, s in zip(pred, samples)) / len(samples)
            drops.append(base - acc)
        raw[f] = max(0.0, float(np.mean(drops)))
    return _normalize(raw)


def ranked(scores: Mapping[str, float]) -> list[tuple[str, float]]:
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


IMPORTANCE_HEADER = ["rank", "feature", "impurity_importance", "permutation_importance"]


def importance_rows(impurity: Mapping[str, float], permutation: Mapping[str, float]) -> list[list]:
    return [
        [r + 1, f, f"{score:.6f}", f"{permutation.get(f, 0.0):.6f}"]
        for r, (f, score) in enumerate(ranked(impurity))
    ]
