"""Thread-pool helper; the numba kernels release the GIL."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigurationError

JOBS_ENV = "RESONANCE_BOX_JOBS"


def resolve_jobs(jobs: int | None = None) -> int:
    """Explicit ``jobs``, else ``$RESONANCE_BOX_JOBS``, else 1."""
    if jobs is None:
        raw = os.environ.get(JOBS_ENV, "").strip()
        if not raw:
            return 1
        try:
            jobs = int(raw)
        except ValueError as exc:
            raise ConfigurationError(f"{JOBS_ENV}={raw!r} is not an integer") from exc
    if jobs < 1:
        raise ConfigurationError(f"jobs must be >= 1, got {jobs}")
    return jobs


def parallel_map(fn, items, jobs: int | None = None) -> list:
    """``[fn(x) for x in items]``, results in input order."""
    items = list(items)
    n = resolve_jobs(jobs)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
