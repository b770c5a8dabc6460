"""Optional worker parallelism with a deterministic reduction order.

The ``STATECHANGE_THREADS`` environment variable caps the worker count;
0 (the default) selects the single-threaded reference mode.  Results are
always collected in input order, so both modes produce bit-identical
outputs for pure per-item work.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

THREADS_ENV = "STATECHANGE_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        count = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if count < 0:
        raise ValueError(f"{THREADS_ENV} must be nonnegative, got {count}")
    return count


def map_ordered(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """``[fn(x) for x in items]``, fanned out across workers when enabled."""
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
