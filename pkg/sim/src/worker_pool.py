"""
Episode worker pool
- Fans independent, seed-indexed jobs out to processes
- Results come back in job order; workers <= 1 runs inline
"""
import logging
import os
from multiprocessing import Pool
from typing import Callable, Iterable, List, Optional, TypeVar

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1) - 1)


class WorkerPool:
    """Context-managed process pool; jobs must be picklable"""

    def __init__(self, workers: Optional[int] = None, chunksize: int = 1):
        self.workers = default_workers() if workers is None else max(1, int(workers))
        self.chunksize = max(1, chunksize)
        self._pool = None

    @property
    def parallel(self) -> bool:
        return self.workers > 1

    def __enter__(self) -> "WorkerPool":
        if self.parallel:
            self._pool = Pool(processes=self.workers)
            log.info("Worker pool started (%d processes)", self.workers)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def imap(self, fn: Callable[[T], R], jobs: Iterable[T]) -> Iterable[R]:
        if self._pool is None:
            return map(fn, jobs)
        return self._pool.imap(fn, jobs, chunksize=self.chunksize)

    def map(self, fn: Callable[[T], R], jobs: Iterable[T]) -> List[R]:
        return list(self.imap(fn, jobs))
