"""Per-orbit random streams and an order-preserving thread map.

Every orbit gets its own counter-based generator keyed by
``(seed, stream, index)``, so results never depend on how orbits are
spread over workers.  The compiled loops release the GIL, which makes
plain threads enough.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# stream tags, one per kind of random draw
STREAM_LIOUVILLE = 1
STREAM_BROWNIAN = 2
STREAM_VISIBILITY = 3
STREAM_ARC = 4
STREAM_PAIRS = 5
STREAM_REPRESENTATION = 6


def orbit_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream), int(index)])))


def default_threads() -> int:
    env = os.environ.get("THREADS")
    if env:
        return max(1, int(env))
    return 1


def ordered_map(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]`` computed on a thread pool, results in input order."""
    items = list(items)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
