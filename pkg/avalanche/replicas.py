"""Fan replicas out over worker processes with a deterministic merge.

Replica r always runs on RngStream(seed, r), and results come back in
replica order, so the output does not depend on the number of workers.
"""
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List

from avalanche.models.lattice import RngStream

DEFAULT_WORKERS = int(os.getenv('AVALANCHE_WORKERS', 1))
VERBOSE = int(os.getenv('AVALANCHE_VERBOSE', 1))


def _run_chunk(task: Callable[[RngStream], Any], seed: int, start: int, stop: int) -> List[Any]:
    return [task(RngStream(seed, replica)) for replica in range(start, stop)]


def _chunks(samples: int, size: int):
    return [(start, min(start + size, samples)) for start in range(0, samples, size)]


def run_replicas(task: Callable[[RngStream], Any], samples: int, seed: int,
                 workers: int = DEFAULT_WORKERS, chunk_size: int = 0, label: str = '') -> List[Any]:
    """Results of ``task`` on replicas 0..samples-1, in replica order.

    ``task`` must be picklable (a module-level function or a
    functools.partial of one) when ``workers`` > 1.
    """
    if samples < 1:
        raise ValueError(f'need at least one replica, got {samples}')
    workers = max(1, int(workers or 1))
    chunk_size = chunk_size or max(1, min(10_000, samples // (4 * workers) or 1))
    chunks = _chunks(samples, chunk_size)
    results: List[Any] = []
    if workers == 1:
        for start, stop in chunks:
            results.extend(_run_chunk(task, seed, start, stop))
            _progress(label, stop, samples, len(chunks))
        return results
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, task, seed, start, stop) for start, stop in chunks]
        for future, (start, stop) in zip(futures, chunks):
            results.extend(future.result())
            _progress(label, stop, samples, len(chunks))
    return results


def _progress(label: str, done: int, total: int, n_chunks: int):
    if VERBOSE and label and n_chunks > 1:
        print(f"[HARNESS] {label}: {done}/{total} replicas", file=sys.stderr)
