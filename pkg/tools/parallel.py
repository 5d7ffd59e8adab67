"""Chunked replica scheduling over a process pool.

Replicas are split into fixed-size chunks whose ids key the random
streams, so chunk results do not depend on which worker ran them. Results
come back sorted by chunk id; reducers see the same sequence at any
worker count.
"""

import logging
import multiprocessing
import time
from dataclasses import dataclass
from functools import partial
from typing import Callable, List, Tuple, TypeVar

from utils.logging import NAMESPACE, configure_worker, get_logger

logger = get_logger("parallel")

R = TypeVar("R")


def _context():
    methods = multiprocessing.get_all_start_methods()
    return multiprocessing.get_context("fork" if "fork" in methods else "spawn")


@dataclass(frozen=True)
class ChunkTask:
    """Replicas start .. start + size - 1, keyed by ``chunk``."""

    chunk: int
    start: int
    size: int


def plan_chunks(replicas: int, chunk_size: int) -> List[ChunkTask]:
    if replicas < 0 or chunk_size < 1:
        raise ValueError("need replicas >= 0 and chunk_size >= 1")
    return [
        ChunkTask(chunk, start, min(chunk_size, replicas - start))
        for chunk, start in enumerate(range(0, replicas, chunk_size))
    ]


def _run_task(worker: Callable[[ChunkTask], R], task: ChunkTask) -> Tuple[ChunkTask, R]:
    return task, worker(task)


def run_chunks(
    worker: Callable[[ChunkTask], R],
    replicas: int,
    chunk_size: int,
    workers: int = 1,
) -> List[Tuple[ChunkTask, R]]:
    """Run ``worker`` over every chunk and return results ordered by chunk id.

    Args:
        worker: Picklable callable (module-level function or partial) when workers > 1
        replicas: Total replicas
        chunk_size: Replicas per chunk
        workers: Process count; 1 runs inline

    Returns:
        List of (task, result) sorted by chunk id
    """
    tasks = plan_chunks(replicas, chunk_size)
    started = time.monotonic()
    if workers <= 1 or len(tasks) <= 1:
        results = [(task, worker(task)) for task in tasks]
    else:
        results = []
        level = logging.getLevelName(logging.getLogger(NAMESPACE).getEffectiveLevel())
        pool = _context().Pool(min(workers, len(tasks)), initializer=configure_worker, initargs=(level,))
        with pool:
            for task, result in pool.imap_unordered(partial(_run_task, worker), tasks):
                results.append((task, result))
                logger.debug(f"Chunk {task.chunk} done ({len(results)}/{len(tasks)})")
        results.sort(key=lambda item: item[0].chunk)
    logger.info(
        f"Ran {len(tasks)} chunks of up to {chunk_size} replicas on {max(1, workers)} workers "
        f"in {time.monotonic() - started:.2f}s"
    )
    return results
