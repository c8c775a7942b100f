"""Counter-based random streams and an order-preserving parallel map.

Every Monte Carlo path gets its own Philox stream whose key is derived from
``(master seed, *stream id)`` through ``numpy.random.SeedSequence``.  A path
therefore sees the same numbers no matter which worker thread draws it, and
results are reassembled in path order before any reduction.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

DEFAULT_SEED = 42

T = TypeVar("T")


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def default_threads() -> int:
    return os.cpu_count() or 1


def parallel_map(fn: Callable[[int], T], indices: Sequence[int], threads: int | None = None) -> list[T]:
    """Apply ``fn`` to each index, returning results in input order."""
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(indices) <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, indices))
