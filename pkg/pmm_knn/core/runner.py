from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Generic, List, Optional, Sequence, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")


# --------- Job model ---------

@dataclass
class Job(Generic[T]):
    index: int
    name: str
    fn: Callable[[], T]
    result: Optional[T] = None
    error: Optional[BaseException] = None
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None


# --------- Runner ---------

class JobRunner:
    """Runs independent jobs on a bounded thread pool.

    Results come back in submission order whatever order the jobs finish in,
    so merged reports do not depend on the worker count.
    """

    def __init__(self, workers: int = 1, progress: bool = False):
        self._workers = max(1, int(workers))
        self._progress = progress
        self._lock = threading.Lock()

    @property
    def workers(self) -> int:
        return self._workers

    def _run_job(self, job: Job, bar: Optional[tqdm]) -> None:
        start = time.perf_counter()
        try:
            job.result = job.fn()
        except Exception as e:
            job.error = e
            logger.debug("Job %s failed: %s", job.name, e)
        finally:
            job.elapsed = time.perf_counter() - start
            if bar is not None:
                with self._lock:
                    bar.update(1)

    def run(self, fns: Sequence[Callable[[], T]], desc: str = "jobs") -> List[Job[T]]:
        jobs = [Job(i, f"{desc}[{i}]", fn) for i, fn in enumerate(fns)]
        bar = tqdm(total=len(jobs), desc=desc, leave=False) if self._progress else None
        try:
            if self._workers == 1 or len(jobs) <= 1:
                for job in jobs:
                    self._run_job(job, bar)
            else:
                with ThreadPoolExecutor(max_workers=min(self._workers, len(jobs))) as pool:
                    list(pool.map(lambda j: self._run_job(j, bar), jobs))
        finally:
            if bar is not None:
                bar.close()
        failed = sum(not j.ok for j in jobs)
        logger.debug("%s: %d jobs done, %d failed", desc, len(jobs), failed)
        return jobs

    def map(
        self,
        fns: Sequence[Callable[[], T]],
        desc: str = "jobs",
        wrap: Optional[Callable[[int, BaseException], BaseException]] = None,
    ) -> List[T]:
        """Like `run` but re-raises the first failure in submission order."""
        jobs = self.run(fns, desc)
        for job in jobs:
            if not job.ok:
                if wrap is None:
                    raise job.error
                raise wrap(job.index, job.error) from job.error
        return [job.result for job in jobs]
