# spectra/eigen.py
"""Dense symmetric eigensolver with size guard, residual check and failure dumps."""

import logging
import os
import time

import numpy as np
from django.conf import settings
from scipy.linalg import LinAlgError, eigh
from threadpoolctl import threadpool_limits

from core.exceptions import NumericalError, OperatorSizeError

logger = logging.getLogger(__name__)

# LAPACK ?syev: Householder tridiagonalization followed by implicit-shift QL/QR.
EIGEN_DRIVER = 'ev'
RESIDUAL_FACTOR = 1e-9


def dense_threshold():
    return getattr(settings, 'IDS_DENSE_THRESHOLD', 4096)


def check_size(dimension, scale=None):
    limit = dense_threshold()
    if dimension > limit:
        where = f" at scale {scale}" if scale is not None else ""
        raise OperatorSizeError(
            f"operator of dimension {dimension}{where} exceeds the dense threshold {limit}; "
            f"use a restricted or windowed computation",
            dimension=dimension,
            scale=scale,
        )


def _dump(matrix, reason):
    dump_dir = getattr(settings, 'IDS_DUMP_DIR', None) or '.'
    os.makedirs(dump_dir, exist_ok=True)
    path = os.path.join(dump_dir, f"eigh-failure-{time.strftime('%Y%m%d-%H%M%S')}-{os.getpid()}.npy")
    np.save(path, matrix)
    logger.error(f"Eigensolver failed ({reason}); matrix of shape {matrix.shape} dumped to {path}")
    return path


def _solve(op, vectors):
    matrix = op.to_dense()
    n = matrix.shape[0]
    if n == 0:
        return (np.zeros(0), np.zeros((0, 0))) if vectors else np.zeros(0)
    try:
        # One BLAS thread per diagonalization
        with threadpool_limits(limits=1, user_api='blas'):
            result = eigh(matrix, eigvals_only=not vectors, driver=EIGEN_DRIVER, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        path = _dump(matrix, exc)
        raise NumericalError(f"eigendecomposition of a {n}x{n} operator failed: {exc}", dump_path=path) from exc
    return result


def eigenvalues(op, check_residuals=False):
    """
    Ascending eigenvalues of `op`, repeated by multiplicity.

    With `check_residuals` the eigenvectors are computed as well and every
    pair must satisfy ‖Hv - λv‖ ≤ 1e-9·‖H‖.
    """
    if not check_residuals:
        return _solve(op, vectors=False)
    values, vectors = _solve(op, vectors=True)
    verify_residuals(op, values, vectors)
    return values


def eigensystem(op):
    """(eigenvalues, orthonormal eigenvectors as columns)."""
    return _solve(op, vectors=True)


def verify_residuals(op, values, vectors):
    if len(values) == 0:
        return 0.0
    matrix = op.to_dense()
    norm = max(float(np.linalg.norm(matrix, 2)), 1.0)
    residual = float(np.max(np.linalg.norm(matrix @ vectors - vectors * values, axis=0)))
    if residual > RESIDUAL_FACTOR * norm:
        path = _dump(matrix, f"residual {residual:.3e}")
        raise NumericalError(f"eigenpair residual {residual:.3e} exceeds {RESIDUAL_FACTOR}·‖H‖", dump_path=path)
    return residual
