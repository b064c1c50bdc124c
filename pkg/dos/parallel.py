# dos/parallel.py
"""Seed-level worker pool. Results come back in submission order, whatever the worker count."""

import logging

from django.conf import settings
from joblib import Parallel, delayed

from operators.matrices import local_spectral_measure
from spectra.eigen import eigenvalues

logger = logging.getLogger(__name__)


def default_workers():
    return getattr(settings, 'IDS_DEFAULT_WORKERS', 1)


def run_parallel(func, tasks, workers=None):
    """Apply `func(*task)` to every task; the output list follows `tasks`."""
    tasks = list(tasks)
    workers = workers or default_workers()
    if workers == 1 or len(tasks) <= 1:
        return [func(*task) for task in tasks]
    logger.debug(f"Dispatching {len(tasks)} tasks to {workers} workers")
    return Parallel(n_jobs=workers)(delayed(func)(*task) for task in tasks)


def realization_spectrum(spec, region, index):
    """Eigenvalues of H_ω restricted to `region` for realization `index`."""
    return eigenvalues(spec.build(region, index))


def realization_local_measure(spec, padded, domain, index):
    """Eigenvalues and χ_D weights of H_ω on the padded box."""
    op = spec.build(padded, index)
    values, weights = local_spectral_measure(op, domain)
    return values, weights, int(op.dimension)
