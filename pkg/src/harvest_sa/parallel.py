"""Order-deterministic fan-out of independent tasks."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

from .errors import ConfigError, TaskError

WORKERS_ENV = "HARVEST_SA_WORKERS"


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        raw = os.environ.get(WORKERS_ENV)
        if raw is None or raw.strip() == "":
            return 1
        try:
            workers = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigError(f"worker count must be >= 1, got {workers}")
    return workers


def _call(packed):
    index, func, item = packed
    try:
        return True, func(item)
    except Exception as exc:  # noqa: BLE001 - re-raised in the parent with its index
        return False, (index, exc)


def parallel_map(func, tasks, workers: int | None = None, chunksize: int | None = None) -> list:
    """``[func(t) for t in tasks]``, optionally spread over worker processes.

    ``func`` and the tasks must be picklable when ``workers > 1``. The result
    list is in task order, so output never depends on the worker count.
    """
    tasks = list(tasks)
    if not tasks:
        return []
    workers = min(resolve_workers(workers), len(tasks))
    packed = [(i, func, t) for i, t in enumerate(tasks)]
    if workers == 1:
        outcomes = map(_call, packed)
    else:
        chunksize = chunksize or max(1, len(tasks) // (4 * workers))
        pool = ProcessPoolExecutor(max_workers=workers)
        try:
            outcomes = list(pool.map(_call, packed, chunksize=chunksize))
        finally:
            pool.shutdown()
    results = []
    for ok, value in outcomes:
        if not ok:
            index, exc = value
            raise TaskError(index, exc) from exc
        results.append(value)
    return results
