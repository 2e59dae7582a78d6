"""
Seeded task execution for surf-select.

Every independent task (subsample fit, CV fold, permutation draw, simulation
rep) receives its own generator derived from the root seed and the task's
keys, so results never depend on scheduling or on the worker count.

Example:
    >>> from surf_select.services.parallel import run_tasks, task_rng
    >>> results = run_tasks(lambda b: task_rng(7, b).random(), range(4), n_jobs=2)
"""
import logging
from typing import Callable, Iterable, Optional, TypeVar

import numpy as np
from joblib import Parallel, delayed

from ..config import get_settings

logger = logging.getLogger(__name__)
settings = get_settings()

T = TypeVar('T')


def task_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the task identified by `keys` under a root seed."""
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])


def run_tasks(
    fn: Callable[..., T],
    tasks: Iterable,
    n_jobs: int = 1,
    backend: Optional[str] = None,
) -> list[T]:
    """
    Run `fn` over tasks and return results in task order.

    Args:
        fn: Callable applied to each task (tuples are unpacked)
        tasks: Iterable of task arguments
        n_jobs: Worker count; 1 runs in the calling process
        backend: joblib backend (default from settings)

    Returns:
        List of results aligned with `tasks`
    """
    tasks = [t if isinstance(t, tuple) else (t,) for t in tasks]
    if n_jobs == 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    logger.debug(f"Dispatching {len(tasks)} tasks to {n_jobs} workers")
    return Parallel(n_jobs=n_jobs, backend=backend or settings.parallel_backend)(
        delayed(fn)(*t) for t in tasks
    )
