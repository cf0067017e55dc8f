"""Order-preserving parallel map.

Work is split per item; results are collected in input order, so output is
identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunked(items: Sequence[T], n_chunks: int) -> list[Sequence[T]]:
    """Split ``items`` into at most ``n_chunks`` contiguous runs."""
    n = len(items)
    n_chunks = max(1, min(n_chunks, n))
    size, rem = divmod(n, n_chunks)
    out = []
    start = 0
    for i in range(n_chunks):
        end = start + size + (1 if i < rem else 0)
        out.append(items[start:end])
        start = end
    return out
