"""JSONL dataset format: load, save, validate, and suitability filtering.

Line 1 of a file is a header object; every following line is one ego-graph::

    {"format_version": 1, "population": "RANDOM", "crawl_campaign": "...", "created": "..."}
    {"landmark": "a", "crawl_time": "...", "nodes": [{"id": "a", "bans": {...}, "features": {...}}],
     "edges": [["a", "b"]]}

Files ending in ``.gz`` are gzip-compressed; ``-`` means stdin/stdout.
"""

from __future__ import annotations

import gzip
import io
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterator

from .graph import BanProfile, EgoGraph, Node, PopulationDataset

FORMAT_VERSION = 1

# Eight names appear in the published analysis; the other ten are standard
# boolean/count fields of the legacy Twitter user object.
CANONICAL_FEATURES = (
    "media_count",
    "friends_count",
    "statuses_count",
    "favorite_count",
    "listed_count",
    "normal_followers_count",
    "followers_count",
    "possibly_sensitive_editable",
    "fast_followers_count",
    "verified",
    "protected",
    "default_profile",
    "default_profile_image",
    "geo_enabled",
    "has_extended_profile",
    "is_translator",
    "profile_use_background_image",
    "has_custom_timelines",
)


class DatasetError(ValueError):
    """Malformed or invalid dataset file."""


@dataclass
class DatasetFileHeader:
    format_version: int = FORMAT_VERSION
    population: str = "RANDOM"
    crawl_campaign: str = ""
    created: str = ""

    def as_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "population": self.population,
            "crawl_campaign": self.crawl_campaign,
            "created": self.created,
        }


def open_text(path, mode: str = "r") -> IO[str]:
    path = str(path)
    if path == "-":
        if "r" in mode:
            return io.TextIOWrapper(sys.stdin.buffer, encoding="utf-8")
        return io.TextIOWrapper(sys.stdout.buffer, encoding="utf-8", write_through=True)
    if path.endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _check_feature(name: str, value):
    if value is None or isinstance(value, bool):
        return value
    if isinstance(value, int):
        if value < 0 and name.endswith("_count"):
            raise DatasetError(f"feature {name!r} must be a non-negative count, got {value}")
        return value
    if isinstance(value, float):
        return value
    raise DatasetError(f"feature {name!r} has non-numeric value {value!r}")


def graph_from_dict(obj: dict) -> EgoGraph:
    try:
        landmark = str(obj["landmark"])
        nodes = []
        for rec in obj["nodes"]:
            feats = rec.get("features")
            if feats is not None:
                feats = {k: _check_feature(k, v) for k, v in feats.items()}
            nodes.append(Node(str(rec["id"]), BanProfile.from_dict(rec.get("bans", {})), feats))
        edges = [(str(a), str(b)) for a, b in obj.get("edges", [])]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(f"bad graph record: {exc!r}") from exc
    return EgoGraph.build(landmark, nodes, edges, obj.get("crawl_time"))


def graph_to_dict(g: EgoGraph) -> dict:
    nodes = []
    for node in g.nodes.values():
        rec = {"id": node.id, "bans": node.bans.as_dict()}
        if node.features is not None:
            rec["features"] = dict(node.features)
        nodes.append(rec)
    out = {"landmark": g.landmark, "nodes": nodes, "edges": [list(e) for e in g.edges]}
    if g.crawl_time is not None:
        out["crawl_time"] = g.crawl_time
    return out


def iter_records(fh: IO[str]) -> Iterator[tuple[int, dict]]:
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from exc


def read_dataset(fh: IO[str]) -> PopulationDataset:
    records = iter_records(fh)
    try:
        lineno, head = next(records)
    except StopIteration:
        raise DatasetError("empty file: missing header line") from None
    if not isinstance(head, dict) or "format_version" not in head:
        raise DatasetError(f"line {lineno}: first line must be a header object")
    if head["format_version"] != FORMAT_VERSION:
        raise DatasetError(f"line {lineno}: unsupported format_version {head['format_version']!r}")
    header = DatasetFileHeader(
        format_version=head["format_version"],
        population=str(head.get("population", "")),
        crawl_campaign=str(head.get("crawl_campaign", "")),
        created=str(head.get("created", "")),
    )
    graphs = []
    for lineno, obj in records:
        try:
            g = graph_from_dict(obj)
        except DatasetError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
        bad = g.violations()
        if bad:
            raise DatasetError(f"line {lineno}: graph {g.landmark!r} invalid: {bad[0]}")
        graphs.append(g)
    meta = {k: v for k, v in head.items() if k not in ("format_version", "population")}
    d = PopulationDataset(header.population, graphs, meta)
    dup = _duplicate_landmarks(d)
    if dup:
        raise DatasetError(f"duplicate landmark {dup[0]!r}")
    return d


def load_dataset(path) -> PopulationDataset:
    with open_text(path, "r") as fh:
        return read_dataset(fh)


def write_dataset(d: PopulationDataset, fh: IO[str], crawl_campaign: str | None = None) -> None:
    head = dict(d.metadata)
    head.update(
        format_version=FORMAT_VERSION,
        population=d.name,
        crawl_campaign=crawl_campaign if crawl_campaign is not None else d.metadata.get("crawl_campaign", ""),
        # an explicit "" keeps generated files reproducible
        created=d.metadata.get("created", datetime.now(timezone.utc).isoformat(timespec="seconds")),
    )
    fh.write(json.dumps(head, sort_keys=True) + "\n")
    for g in d.graphs:
        fh.write(json.dumps(graph_to_dict(g), separators=(",", ":")) + "\n")


def save_dataset(d: PopulationDataset, path) -> None:
    with open_text(path, "w") as fh:
        write_dataset(d, fh)


def _duplicate_landmarks(d: PopulationDataset) -> list[str]:
    seen, dup = set(), []
    for g in d.graphs:
        if g.landmark in seen:
            dup.append(g.landmark)
        seen.add(g.landmark)
    return dup


def validate_dataset(d: PopulationDataset) -> list[str]:
    """All invariant violations in ``d``; an empty list means the dataset is valid."""
    out = []
    for g in d.graphs:
        out.extend(g.violations())
    out.extend(f"duplicate landmark {lm!r}" for lm in _duplicate_landmarks(d))
    return out


@dataclass
class FilterReport:
    kept: int
    removed: int


def filter_suitable(d: PopulationDataset, min_nodes: int = 2) -> tuple[PopulationDataset, FilterReport]:
    """Drop graphs with fewer than ``min_nodes`` nodes (singletons by default)."""
    kept = [g for g in d.graphs if len(g) >= min_nodes]
    out = PopulationDataset(d.name, kept, dict(d.metadata))
    return out, FilterReport(len(kept), len(d.graphs) - len(kept))


def datasets_equal(a: PopulationDataset, b: PopulationDataset) -> bool:
    """Structural equality: same graphs, nodes, bans, features and edge sets."""
    if a.name != b.name or len(a.graphs) != len(b.graphs):
        return False
    for ga, gb in zip(a.graphs, b.graphs):
        if ga.landmark != gb.landmark or dict(ga.nodes) != dict(gb.nodes):
            return False
        if set(ga.edges) != set(gb.edges):
            return False
    return True
