"""Ordered thread-pool map; results come back in input order."""

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, threads=1):
    items = list(items)
    if threads is None or threads <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
