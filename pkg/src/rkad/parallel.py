"""Process-pool helper whose results never depend on the worker count.

Work is split into tasks by the caller (fixed block boundaries), results
come back in task order, and shared read-only context is shipped once per
worker through the pool initializer.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

_CONTEXT: dict = {}


def _init(ctx):
    _CONTEXT.clear()
    _CONTEXT.update(ctx)


def _call(args):
    fn, task = args
    return fn(_CONTEXT, task)


def ordered_map(fn, tasks, context: dict, workers: int = 1) -> list:
    """``[fn(context, t) for t in tasks]``, optionally across processes.

    ``fn`` must be a module-level function so it can be pickled.
    """
    tasks = list(tasks)
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [fn(context, t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init, initargs=(context,)) as ex:
        return list(ex.map(_call, [(fn, t) for t in tasks]))
