"""Deterministic data-parallel helpers.

Work is cut into chunks whose size does not depend on the thread count, the
chunks are evaluated in any order, and results are merged in chunk order.
Reductions go through ``tree_sum``, whose pairing topology depends only on
the number of chunks.  Output is therefore bit-identical for any pool size.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 1 << 15


class WorkerPool:
    """Thread pool sized by configuration; ``threads=1`` runs inline."""

    def __init__(self, threads: int | None = 1):
        if threads is None or threads <= 0:
            threads = os.cpu_count() or 1
        self.threads = int(threads)
        self._executor = ThreadPoolExecutor(self.threads) if self.threads > 1 else None

    def map(self, fn, items):
        items = list(items)
        if self._executor is None or len(items) <= 1:
            return [fn(it) for it in items]
        return list(self._executor.map(fn, items))

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_SERIAL = WorkerPool(1)


def serial_pool() -> WorkerPool:
    return _SERIAL


def chunk_slices(n: int, chunk: int = DEFAULT_CHUNK):
    return [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def chunked_apply(pool, fn, n, chunk=DEFAULT_CHUNK):
    """Apply ``fn(slice)`` to fixed-size chunks of ``range(n)``; results in order."""
    pool = pool or _SERIAL
    return pool.map(fn, chunk_slices(n, chunk))


def tree_sum(values) -> float:
    """Pairwise sum with a fixed topology (depends only on ``len(values)``)."""
    vals = [float(v) for v in values]
    if not vals:
        return 0.0
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


def exact_sum(arr) -> float:
    """Correctly rounded sum of a float array, independent of ordering."""
    return math.fsum(np.asarray(arr, dtype=np.float64).ravel())
