"""Worker-pool helper with deterministic result ordering.

Thread count never changes results: every work item owns its RNG substream
and outputs are collected by index.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_max_threads: int | None = None


def get_max_threads() -> int:
    if _max_threads is not None:
        return _max_threads
    env = os.environ.get("MGCW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def set_max_threads(n: int | None) -> None:
    global _max_threads
    _max_threads = None if n is None else max(1, int(n))


def parallel_map(fn, items):
    items = list(items)
    n_workers = min(get_max_threads(), len(items)) or 1
    if n_workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))
