"""Order-preserving map over independent work items, capped by ``WF_THREADS``."""

import os
from concurrent.futures import ThreadPoolExecutor


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get("WF_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    items = list(items)
    workers = min(max_threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
