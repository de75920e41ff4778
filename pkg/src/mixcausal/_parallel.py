"""Order-preserving map over replicate indices, optionally across processes."""

import os
from concurrent.futures import ProcessPoolExecutor

JOBS_ENV = "MIXCAUSAL_JOBS"


def default_jobs():
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn, items, n_jobs=None):
    """``list(map(fn, items))``; results come back in input order either way."""
    items = list(items)
    n_jobs = default_jobs() if n_jobs is None else n_jobs
    if n_jobs <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    chunk = max(1, len(items) // (4 * n_jobs))
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items, chunksize=chunk))
