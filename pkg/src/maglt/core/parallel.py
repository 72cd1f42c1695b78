"""Order-preserving parallel map used by the per-point numerics.

Scale evaluations, per-ball gauges and random operator instances are
independent of each other. Results always come back in input order so that
reports do not depend on thread scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_THREADS_ENV = "MAGLT_THREADS"


def default_workers() -> int:
    """Return the worker cap from MAGLT_THREADS, falling back to 4."""
    raw = os.getenv(_THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            return 4
    return 4


def map_parallel(
    fn: Callable[[T], R],
    items: Iterable[T],
    max_workers: int | None = None,
) -> list[R]:
    """
    Apply fn to every item using a thread pool.

    Args:
        fn: Function applied to each item.
        items: Inputs; consumed once.
        max_workers: Maximum number of concurrent workers. None uses
            MAGLT_THREADS. A value of 1 runs sequentially in the caller's
            thread.

    Returns:
        Results in the same order as items.
    """
    workers = default_workers() if max_workers is None else max_workers
    if workers < 1:
        raise ValueError("max_workers must be >= 1")
    items = list(items)
    if not items:
        return []
    if workers == 1 or len(items) == 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
