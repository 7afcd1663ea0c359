"""Chunked Monte Carlo execution with worker-count-independent results.

Work is cut into fixed-size chunks; chunk ``i`` draws from the ``i``-th
child of ``SeedSequence(seed)``. Chunk statistics are merged in chunk order,
so the outcome does not depend on how many threads ran the chunks.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

WORKERS_ENV = "CONEHIT_WORKERS"
CHUNK = 2048


def resolve_workers(workers: int | None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, int(workers or 1))


@dataclass
class Welford:
    """Running mean and sum of squared deviations, per component."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls, k: int) -> "Welford":
        return cls(0, np.zeros(k), np.zeros(k))

    @classmethod
    def of(cls, values: np.ndarray) -> "Welford":
        values = np.atleast_2d(values)
        n = values.shape[0]
        if n == 0:
            return cls.empty(values.shape[1])
        mean = values.mean(axis=0)
        return cls(n, mean, ((values - mean) ** 2).sum(axis=0))

    def merge(self, other: "Welford") -> "Welford":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta**2 * self.n * other.n / n
        return Welford(n, mean, m2)

    @property
    def stderr(self) -> np.ndarray:
        if self.n < 2:
            return np.full_like(self.mean, np.inf)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


def chunk_sizes(n_total: int, chunk: int = CHUNK) -> list[int]:
    full, rem = divmod(n_total, chunk)
    return [chunk] * full + ([rem] if rem else [])


def run_chunks(task: Callable[[int, np.random.Generator, int], object], n_total: int,
               seed: int, workers: int | None = 1, chunk: int = CHUNK) -> list:
    """Call ``task(size, rng, chunk_index)`` per chunk; results in chunk order."""
    sizes = chunk_sizes(n_total, chunk)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(s, np.random.default_rng(q), i) for i, (s, q) in enumerate(zip(sizes, seqs))]
    nw = resolve_workers(workers)
    if nw == 1 or len(jobs) == 1:
        return [task(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=nw) as pool:
        return list(pool.map(lambda j: task(*j), jobs))


def merge_all(parts: Sequence[Welford]) -> Welford:
    acc = parts[0]
    for p in parts[1:]:
        acc = acc.merge(p)
    return acc
