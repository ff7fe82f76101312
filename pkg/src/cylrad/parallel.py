"""Chunk-deterministic Monte Carlo.

Work is split into fixed-size chunks; chunk ``i`` draws from the substream
``SeedSequence(seed, spawn_key=(i,))`` and results are concatenated in chunk
order, so output is bit-identical for any worker count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

CHUNK_ROWS = 4096

_threads = 1

R = TypeVar("R")


def set_threads(k: int) -> None:
    global _threads
    if k < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(k)


def get_threads() -> int:
    return _threads


def seed_seq(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


def child(ss: np.random.SeedSequence, i: int) -> np.random.SeedSequence:
    """Pure (stateless) child derivation, unlike ``SeedSequence.spawn``."""
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (int(i),))


def rng_of(ss: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int) -> int:
    """A fresh 63-bit seed for an independent stream keyed by ``key``."""
    return int(seed_seq(seed, *key).generate_state(1, np.uint64)[0] >> np.uint64(1))


def chunk_bounds(n: int, chunk: int = CHUNK_ROWS) -> list[tuple[int, int]]:
    return [(a, min(a + chunk, n)) for a in range(0, n, chunk)]


def map_chunks(fn: Callable[[np.random.SeedSequence, int], R], seed: int, n: int,
               chunk: int = CHUNK_ROWS, threads: int | None = None) -> list[R]:
    """Run ``fn(seedseq_i, rows_i)`` for every chunk; results in chunk order."""
    bounds = chunk_bounds(n, chunk)
    tasks = [(seed_seq(seed, i), b - a) for i, (a, b) in enumerate(bounds)]
    k = threads or _threads
    if k == 1 or len(tasks) <= 1:
        return [fn(ss, rows) for ss, rows in tasks]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(lambda t: fn(*t), tasks))


def stack_chunks(fn: Callable[[np.random.SeedSequence, int], np.ndarray], seed: int, n: int,
                 width: int, chunk: int = CHUNK_ROWS, threads: int | None = None) -> np.ndarray:
    parts = map_chunks(fn, seed, n, chunk, threads)
    if not parts:
        return np.zeros((0, width))
    return np.concatenate(parts, axis=0)
