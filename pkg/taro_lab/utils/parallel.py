"""
Ordered worker pool capped by TARO_THREADS
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from taro_lab.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    max_workers: Optional[int] = None
) -> List[R]:
    """
    Apply fn to every item on a thread pool and return results in input order

    Args:
        fn: Pure function of one item
        items: Work items
        max_workers: Worker cap (defaults to settings.threads)

    Returns:
        List of results, index-aligned with items
    """
    work = list(items)
    workers = max(1, min(max_workers or settings.threads, len(work) or 1))

    if workers == 1:
        return [fn(item) for item in work]

    logger.debug(f"Mapping {len(work)} items over {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map() yields in submission order regardless of completion order
        return list(pool.map(fn, work))
