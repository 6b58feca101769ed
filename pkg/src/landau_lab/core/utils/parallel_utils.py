import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from landau_lab.core.envs.lab_env_vars import LANDAU_LAB_THREADS

_logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_worker_count(n_items: int, max_workers: Optional[int] = None) -> int:
    cap = LANDAU_LAB_THREADS.get_int() if max_workers is None else max_workers
    if cap < 0:
        raise ValueError(f"Worker count must be non-negative, got {cap}.")
    if cap == 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_items))


def parallel_map(
    func: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None
) -> List[R]:
    """
    Apply `func` to every item using a thread pool. Results keep the order of `items`,
    so reductions over them do not depend on the worker count.
    """
    items = list(items)
    workers = resolve_worker_count(len(items), max_workers)
    if workers <= 1:
        return [func(item) for item in items]
    _logger.debug(f"Dispatching {len(items)} items over {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
