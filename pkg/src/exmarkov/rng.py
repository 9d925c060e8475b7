"""Reproducible random streams.

Every random draw in the library comes from ``stream(seed, *key)``: a Philox
(counter-based) generator keyed by the master seed and an integer path such as
``(purpose, block)``. Work split into fixed-size blocks therefore produces the
same numbers no matter how many threads process the blocks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

__all__ = ["stream", "BLOCK", "map_blocks", "set_threads", "get_threads"]

# coordinates per RNG block; part of the reproducibility contract
BLOCK = 1024

# stream purposes
INIT, DYNAMICS, CANDIDATES, CLOCK, JUMPS, MATRIX = range(6)

_threads = int(os.environ.get("EXMARKOV_THREADS", "1"))

T = TypeVar("T")


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def set_threads(n: int) -> None:
    global _threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def get_threads() -> int:
    return _threads


def blocks(n: int, size: int = BLOCK) -> list[tuple[int, int, int]]:
    """``(block_index, lo, hi)`` triples covering ``range(n)``."""
    return [(b, lo, min(lo + size, n)) for b, lo in enumerate(range(0, n, size))]


def map_blocks(fn: Callable[[int, int, int], T], n: int, threads: int | None = None) -> list[T]:
    """Apply ``fn(block, lo, hi)`` over all blocks; results in block order."""
    work = blocks(n)
    threads = threads or _threads
    if threads <= 1 or len(work) <= 1:
        return [fn(*w) for w in work]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda w: fn(*w), work))


def sample_colors(weights: Iterable[float], n: int, seed: int, *key: int) -> np.ndarray:
    """``n`` i.i.d. colors drawn from ``weights``; blockwise so it is thread-count free."""
    cum = np.cumsum(np.asarray(list(weights), dtype=float))
    cum[-1] = 1.0

    def draw(b, lo, hi):
        u = stream(seed, *key, b).random(hi - lo)
        return np.searchsorted(cum, u, side="right").astype(np.int64)

    if n == 0:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(map_blocks(draw, n, threads=1))
