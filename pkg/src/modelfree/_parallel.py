from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

# Fixed so that batch shapes, and hence floating-point results, never depend
# on the worker count.
CHUNK = 256

ENV_THREADS = "MODELFREE_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(ENV_THREADS, "1") or 1)
    return max(1, int(threads))


def map_chunks(fn: Callable[[int, int], T], total: int, threads: int | None = None, chunk: int = CHUNK) -> list[T]:
    """Run ``fn(start, stop)`` over fixed-size chunks of ``range(total)``.

    Results come back in chunk order whatever the scheduling.
    """
    bounds = [(s, min(s + chunk, total)) for s in range(0, total, chunk)]
    workers = resolve_threads(threads)
    if workers == 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=min(workers, len(bounds))) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))
