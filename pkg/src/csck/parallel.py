"""Bounded, order-preserving worker pool sized by ``CSCK_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import BadConfig


def thread_count() -> int:
    raw = os.environ.get("CSCK_THREADS", "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError as exc:
        raise BadConfig(f"CSCK_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise BadConfig(f"CSCK_THREADS must be a positive integer, got {n}")
    return n


def ordered_map(func, items, threads: int | None = None) -> list:
    """``list(map(func, items))``, run on a thread pool when more than one thread is allowed.

    Results keep the input order, so output does not depend on scheduling.
    """
    items = list(items)
    n = thread_count() if threads is None else threads
    if n <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(func, items))
