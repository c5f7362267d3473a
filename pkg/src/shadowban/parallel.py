"""Seed derivation and an order-preserving process-pool map.

Random streams are keyed by (seed, graph index, chunk index) and never by
worker, so the worker count cannot change any result.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

# trials are drawn in fixed-size blocks, each with its own stream
TRIAL_CHUNK = 1000


def default_workers() -> int:
    env = os.environ.get("SHADOWBAN_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def trial_chunks(trials: int, chunk: int = TRIAL_CHUNK) -> list[tuple[int, int]]:
    """(chunk index, size) blocks covering ``trials``."""
    return [(i, min(chunk, trials - start)) for i, start in enumerate(range(0, trials, chunk))]


def pmap(func: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    items = list(items)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    chunksize = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunksize))


def exact_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Sum of integer arrays (exact, order independent)."""
    total = np.zeros_like(parts[0], dtype=np.int64)
    for p in parts:
        total += p
    return total
