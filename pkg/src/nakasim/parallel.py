"""Deterministic fan-out of independent trials."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")


def map_trials(fn: Callable[[int], T], n_trials: int, threads: int = 1) -> list[T]:
    """Run ``fn(i)`` for every trial index and return results in index order.

    Each trial seeds itself from its index, so the result list is identical
    for any thread count; reductions over it then happen in a fixed order.
    The compiled kernels release the GIL, which is where threads pay off.
    """
    if threads <= 1 or n_trials <= 1:
        return [fn(i) for i in range(n_trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_trials), chunksize=max(1, n_trials // (8 * threads))))
