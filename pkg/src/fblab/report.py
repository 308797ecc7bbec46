"""Shared experiment reporting: exact binomial intervals, chunked Monte
Carlo execution with deterministic combining, and the SchemeReport record
that every scheme runner returns.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import beta as _beta

from .numerics import RngContract, TowerReal

# Fixed Monte Carlo chunk size.  Chunk boundaries (and hence the exact
# random numbers each trial sees) depend only on the trial count, never on
# the worker count, so results are bitwise reproducible under any
# FBLAB_THREADS setting.
CHUNK_TRIALS = 1 << 18

THREADS_ENV = "FBLAB_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be an integer") from exc
        return max(1, n)
    return os.cpu_count() or 1


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact (Clopper-Pearson) binomial confidence interval for k of n."""
    if not 0 <= k <= n or n <= 0:
        raise ValueError("need 0 <= k <= n, n > 0")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(_beta.ppf(alpha / 2.0, k, n - k + 1))
    hi = 1.0 if k == n else float(_beta.ppf(1.0 - alpha / 2.0, k + 1, n - k))
    return lo, hi


def run_chunked(
    trials: int,
    rng: RngContract,
    chunk_fn: Callable[[np.random.Generator, int], dict],
    threads: int | None = None,
) -> dict:
    """Run ``chunk_fn(generator, size) -> dict of additive statistics`` over
    ``trials`` trials in fixed-size chunks and sum the statistics.

    Chunk c draws from ``rng.chunk_generator(c)``; partial results are
    combined in chunk order, so the output is independent of the thread
    count.  ``threads`` defaults to FBLAB_THREADS (or the CPU count).
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    sizes = []
    left = trials
    while left > 0:
        sizes.append(min(CHUNK_TRIALS, left))
        left -= CHUNK_TRIALS
    workers = worker_count() if threads is None else max(1, threads)
    workers = min(workers, len(sizes))

    def job(c: int) -> dict:
        return chunk_fn(rng.chunk_generator(c), sizes[c])

    if workers <= 1 or len(sizes) == 1:
        parts = [job(c) for c in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))

    total: dict = {}
    for part in parts:
        for key, val in part.items():
            if key in total:
                total[key] = total[key] + val
            else:
                total[key] = val
    return total


def mean_and_stderr(s1: float, s2: float, n: int) -> tuple[float, float]:
    """Mean and standard error of the mean from sum and sum of squares."""
    m = s1 / n
    var = max(0.0, s2 / n - m * m)
    se = (var / n) ** 0.5 if n > 1 else float("inf")
    return m, se


@dataclass
class SchemeReport:
    """Uniform result record for every scheme runner.

    ``analytic`` maps value names to floats or TowerReals; ``empirical``
    holds Monte Carlo estimates (floats, or small lists for per-step
    arrays).  ``wall_clock_s`` is informational only and is excluded from
    serialized output so identical runs produce identical bytes.
    """

    scheme: str
    params: dict = field(default_factory=dict)
    analytic: dict = field(default_factory=dict)
    empirical: dict = field(default_factory=dict)
    energy: dict = field(default_factory=dict)
    trials: int = 0
    errors: int | None = None
    ci95: tuple[float, float] | None = None
    feasible: bool | None = None
    seed: int | None = None
    stream_id: int = 0
    wall_clock_s: float = 0.0

    def analytic_float(self, name: str) -> float:
        v = self.analytic.get(name)
        if isinstance(v, TowerReal):
            return float(v)
        return float("nan") if v is None else float(v)


class Stopwatch:
    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self._t0
        return False
