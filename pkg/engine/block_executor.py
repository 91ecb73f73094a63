"""
Block Executor — Chunked worker pool for the conditionally independent
Gibbs blocks.

A block's index range (items or individuals) is cut into fixed-size
chunks.  Chunk ``n`` always draws from ``rng.substream(n)``, whichever
worker runs it, so the output of a block depends only on the chunk size
and never on the number of workers or on thread scheduling.

Workers are threads from a ``ThreadPoolExecutor``; the heavy numpy calls
inside a chunk release the GIL.

Usage:
    with BlockExecutor(workers=4, chunk_size=256) as executor:
        results = executor.run(n_items, work, rng)
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, TypeVar

from core.errors import DomainError
from core.rng import RngStream

logger = logging.getLogger(__name__)

T = TypeVar('T')

DEFAULT_CHUNK_SIZE = 256


class BlockExecutor:
    """Runs ``work(index_slice, chunk_rng)`` over every chunk of a range."""

    def __init__(self, workers: int = 1, chunk_size: int = DEFAULT_CHUNK_SIZE):
        if workers < 1:
            raise DomainError(f"workers must be at least 1, got {workers}")
        if chunk_size < 1:
            raise DomainError(f"chunk_size must be at least 1, got {chunk_size}")
        self.workers = int(workers)
        self.chunk_size = int(chunk_size)
        self._pool: Optional[ThreadPoolExecutor] = None
        if self.workers > 1:
            self._pool = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix='mixirt-block')
            logger.debug(f"Started block pool with {self.workers} workers (chunk size {self.chunk_size})")

    def __enter__(self) -> "BlockExecutor":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def chunks(self, n: int) -> list[slice]:
        return [slice(start, min(start + self.chunk_size, n)) for start in range(0, n, self.chunk_size)]

    def run(self, n: int, work: Callable[[slice, RngStream], T], rng: RngStream) -> list[T]:
        """Apply ``work`` to every chunk of ``range(n)``; results in chunk order.

        Chunks must write to disjoint slices of any shared output.  The
        first failing chunk (in chunk order) re-raises its exception.
        """
        tasks = [(sl, rng.substream(idx)) for idx, sl in enumerate(self.chunks(n))]
        if self._pool is None or len(tasks) == 1:
            return [work(sl, chunk_rng) for sl, chunk_rng in tasks]
        futures = [self._pool.submit(work, sl, chunk_rng) for sl, chunk_rng in tasks]
        return [f.result() for f in futures]


SEQUENTIAL = BlockExecutor(workers=1)
