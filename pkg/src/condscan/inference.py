"""Permutation p-values for scan statistics.

Replicate ``b`` draws its permutation from a PCG64 stream seeded with
``SeedSequence([seed, b])``, so results do not depend on how replicates are
batched or spread across threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .grid import (BoundedGrid, GridScanner, LocalScanner, LocalWindows, QuantileGrid,
                   ScanReport, UpperTails)
from .moments import PairedSample
from .multivar import DEFAULT_BUDGET, MultiSample, MutualScanner

MIN_REPLICATES = 19
THREADS_ENV = "CONDSCAN_THREADS"
# Upper bound on (replicates x observations) evaluated in one vectorised batch.
BATCH_CELLS = 2_000_000


@dataclass(frozen=True, eq=False)
class PermutationTestResult:
    observed_stat: float
    null_stats: np.ndarray
    p_value: float
    B: int
    seed: int
    observed: Optional[ScanReport] = None

    def null_quantile(self, q: float = 0.95) -> float:
        return float(np.quantile(self.null_stats, q))


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def replicate_rng(seed: int, b: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, b])))


def add_one_p_value(observed: float, null_stats) -> float:
    null_stats = np.asarray(null_stats, dtype=float)
    return (1 + int(np.count_nonzero(null_stats >= observed))) / (null_stats.size + 1)


def _run_batches(batches, work, threads):
    if threads <= 1 or len(batches) <= 1:
        return [work(b) for b in batches]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, batches))


def permutation_test(
    sample: Union[PairedSample, MultiSample],
    family,
    B: int = 199,
    seed: int = 0,
    m_min: int = 30,
    grid: Optional[QuantileGrid] = None,
    budget: int = DEFAULT_BUDGET,
    threads: Optional[int] = None,
) -> PermutationTestResult:
    """Calibrate the max-|cor| scan statistic by re-pairing the data.

    Parameters
    ----------
    sample : PairedSample or MultiSample
        For a paired sample the ``y`` column is permuted. For a multi-column
        sample every column except the first gets its own permutation.
    family : BoundedGrid, UpperTails or LocalWindows
        Scan configuration. For a MultiSample only the grid families apply;
        their ``levels`` is used per axis and the mutual-scan defaults decide
        bounded versus tails unless the family says otherwise.
    B : int
        Number of permutation replicates, at least 19.
    seed : int
        Non-negative master seed.
    threads : int, optional
        Worker threads; defaults to ``CONDSCAN_THREADS`` (or 1). The result
        does not depend on it.

    Returns
    -------
    PermutationTestResult
        With ``p_value = (1 + #{null >= observed}) / (B + 1)``.
    """
    if B < MIN_REPLICATES:
        raise ValueError(f"B must be >= {MIN_REPLICATES}, got {B}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    threads = thread_count() if threads is None else threads
    n = sample.n
    rngs = [replicate_rng(seed, b) for b in range(B)]

    if isinstance(sample, MultiSample):
        if sample.d == 2:
            return permutation_test(PairedSample(sample.column(0), sample.column(1)),
                                    family, B, seed, m_min, grid, budget, threads)
        if not isinstance(family, (BoundedGrid, UpperTails)):
            raise TypeError("multi-column samples need a BoundedGrid or UpperTails family")
        fam = "tails" if isinstance(family, UpperTails) else None
        scanner = MutualScanner(sample, family.levels, m_min, budget, fam)
        report = scanner.report()

        def work(indices):
            out = []
            for b in indices:
                rng = rngs[b]
                cols = [np.arange(n)] + [rng.permutation(n) for _ in range(sample.d - 1)]
                data = np.column_stack([scanner.centred[p, k] for k, p in enumerate(cols)])
                bins = np.column_stack([scanner.bins[p, k] for k, p in enumerate(cols)])
                out.append(scanner.statistic(data, bins))
            return out

        batches = [list(range(b, min(b + 8, B))) for b in range(0, B, 8)]
    elif isinstance(family, LocalWindows):
        scanner = LocalScanner(sample, family.eps, family.stride, m_min)
        report = scanner.report()

        def work(indices):
            return [scanner.statistic(sample.y[rngs[b].permutation(n)]) for b in indices]

        batches = [list(range(b, min(b + 8, B))) for b in range(0, B, 8)]
    elif isinstance(family, (BoundedGrid, UpperTails)):
        scanner = GridScanner(sample, family, m_min, grid)
        report = scanner.report()
        size = max(1, min(64, BATCH_CELLS // n))

        def work(indices):
            perms = np.stack([rngs[b].permutation(n) for b in indices])
            return list(scanner.statistic(perms))

        batches = [list(range(b, min(b + size, B))) for b in range(0, B, size)]
    else:
        raise TypeError(f"unsupported family {family!r}")

    null = np.array([v for chunk in _run_batches(batches, work, threads) for v in chunk],
                    dtype=float)
    observed = report.max_abs_cor
    return PermutationTestResult(observed, null, add_one_p_value(observed, null), B, seed,
                                 report)
