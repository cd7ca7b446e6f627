"""Helpers to fan out independent, seeded computations (Monte Carlo replications,
bootstrap draws, blocks of Gaussian draws) over a pool of worker threads.

Results never depend on the number of workers: every unit of work is identified by an
index and draws its random numbers from its own stream derived from ``(seed, index)``,
see :func:`index_rng`.
"""
from os import cpu_count
from typing import Callable
from typing import List
from typing import Optional
from typing import TypeVar

import numpy as np
from joblib import Parallel
from joblib import delayed

from .exceptions import InputError
from .log import internal_logger
from .settings import config

T = TypeVar("T")


def resolve_threads(threads: Optional[int] = None) -> int:
    """Translates the ``threads`` knob into an actual number of workers.

    >>> resolve_threads(3)
    3
    >>> resolve_threads(0) >= 1
    True

    :param threads: ``None`` uses the ``THREADS`` setting, ``0`` all available cores
    :return: Number of workers, at least one.
    """
    if threads is None:
        threads = config["THREADS"]
    if threads < 0:
        raise InputError(f"Number of threads must not be negative, got {threads}")
    if threads == 0:
        return cpu_count() or 1
    return threads


def index_rng(seed: int, index: int) -> np.random.Generator:
    """Random stream of the unit of work ``index``.

    >>> float(index_rng(7, 3).random()) == float(index_rng(7, 3).random())
    True
    >>> float(index_rng(7, 3).random()) == float(index_rng(7, 4).random())
    False
    """
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def derive_seed(seed: int, *path: int) -> int:
    """Derives a child seed, used to hand independent seeds to nested computations.

    >>> derive_seed(1, 2) == derive_seed(1, 2)
    True
    """
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def run_indexed(
    func: Callable[[int], T], count: int, threads: Optional[int] = None
) -> List[T]:
    """Calls ``func(index)`` for ``index = 0..count-1`` and returns the results in index
    order.

    >>> run_indexed(lambda i: i * i, 4, threads=2)
    [0, 1, 4, 9]

    :param func: Unit of work, must only depend on its index and shared read-only data
    :param count: Number of units
    :param threads: Number of worker threads, see :func:`resolve_threads`
    """
    n_jobs = min(resolve_threads(threads), max(count, 1))
    if n_jobs == 1:
        return [func(index) for index in range(count)]
    internal_logger.debug("Dispatching %d units of work to %d threads", count, n_jobs)
    return list(
        Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(func)(index) for index in range(count)
        )
    )
