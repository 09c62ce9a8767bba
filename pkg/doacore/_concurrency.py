from typing import Any, Callable, List, Sequence, TypeVar

import anyio
import anyio.to_thread
import numpy as np

__all__ = ["run_trials", "item_rng"]

T = TypeVar("T")


def item_rng(seed: int, stream: int, *item: int) -> np.random.Generator:
    """
    An independent generator for one work item, derived from the global seed.

    Items draw from the same generator however the work is scheduled.
    """
    return np.random.default_rng([seed, stream, *item])


async def _run_all(func: Callable[[Any], T], items: List[Any], threads: int) -> List[T]:
    results: List[Any] = [None] * len(items)
    errors: List[Any] = [None] * len(items)
    limiter = anyio.CapacityLimiter(threads)

    async def run(index: int, item: Any) -> None:
        try:
            results[index] = await anyio.to_thread.run_sync(func, item, limiter=limiter)
        except Exception as exc:
            errors[index] = exc

    async with anyio.create_task_group() as task_group:
        for index, item in enumerate(items):
            task_group.start_soon(run, index, item)

    for error in errors:
        if error is not None:
            raise error
    return results


def run_trials(func: Callable[[Any], T], items: Sequence[Any], threads: int = 1) -> List[T]:
    """
    Call `func(item)` for every item, on up to `threads` worker threads.

    Results are returned in item order. If any call raises, the exception of
    the first failing item is re-raised once all calls have finished.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    return anyio.run(_run_all, func, items, threads)
