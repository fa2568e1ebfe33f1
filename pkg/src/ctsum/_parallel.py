"""Worker-count policy shared by corpus generation and evaluation.

CTS_THREADS bounds the worker count; unset or invalid means serial. Work
items must be order-independent (callers guarantee this via per-item RNG
streams), so results are returned in input order either way.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    raw = os.environ.get("CTS_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, min(n, os.cpu_count() or 1))


def pmap(fn, items) -> list:
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
