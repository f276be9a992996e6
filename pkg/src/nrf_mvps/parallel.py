"""Thread-count-independent parallel map.

Work is split into chunks whose layout never depends on the worker count,
BLAS runs single-threaded inside workers, and results come back in chunk
order so callers can reduce them sequentially.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

from threadpoolctl import threadpool_limits

ENV_THREADS = "NRF_MVPS_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get(ENV_THREADS)
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


@contextmanager
def deterministic_blas():
    with threadpool_limits(limits=1):
        yield


def ordered_map(fn, items, threads: int | None = None) -> list:
    items = list(items)
    n = resolve_threads(threads)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
