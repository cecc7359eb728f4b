"""Fan independent sub-solves out over a thread pool."""
import asyncio
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, Optional, Sequence

_default_workers = 3


def set_default_workers(workers: int) -> None:
    global _default_workers
    _default_workers = max(1, int(workers))


async def _gather(calls: Sequence[Callable[[], Any]], max_workers: int) -> List[Any]:
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return await asyncio.gather(*(loop.run_in_executor(pool, call) for call in calls))


def run_parallel(calls: Sequence[Callable[[], Any]], max_workers: Optional[int] = None) -> List[Any]:
    """Results in call order; the first exception raised by any call propagates."""
    workers = max_workers or _default_workers
    if workers <= 1 or len(calls) <= 1:
        return [call() for call in calls]
    return list(asyncio.run(_gather(calls, min(workers, len(calls)))))
