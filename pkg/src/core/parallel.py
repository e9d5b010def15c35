"""Worker-count resolution and deterministic parallel maps."""

import logging
import os
from typing import Callable, Iterable, List, Optional, TypeVar

from dotenv import load_dotenv
from joblib import Parallel, delayed

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "HAMEXPAND_THREADS"
MAX_WORKERS = 32

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(requested: Optional[int] = None) -> int:
    """Resolve the number of workers.

    Explicit requests win; otherwise ``HAMEXPAND_THREADS`` (also read from a
    ``.env`` file) is used; otherwise a single worker.
    """
    if requested is not None:
        return max(1, min(MAX_WORKERS, requested))

    load_dotenv()
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw:
        try:
            return max(1, min(MAX_WORKERS, int(raw)))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV_VAR}={raw!r}")
    return 1


def ordered_map(
    func: Callable[[T], R], items: Iterable[T], n_jobs: Optional[int] = None
) -> List[R]:
    """Apply ``func`` to every item, preserving input order in the result."""
    workers = resolve_workers(n_jobs)
    materialized = list(items)
    if workers == 1 or len(materialized) <= 1:
        return [func(item) for item in materialized]
    logger.debug(f"Dispatching {len(materialized)} tasks to {workers} workers")
    return list(Parallel(n_jobs=workers)(delayed(func)(item) for item in materialized))
