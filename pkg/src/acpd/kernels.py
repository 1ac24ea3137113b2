"""Numeric hot loops: numba-compiled with pure-numpy fallbacks.

Setting ACPD_PURE_NUMPY=1 (or "true"/"yes"/"on") at import time selects the
numpy fallbacks; the default uses numba when it is importable. Both variants
of every kernel stay importable for tests and for
``benchmarks/bench_kernels.py``.

The sequential coordinate-step loop (``sdca_epoch``) dominates runtime; the
fallback keeps the identical update order but pays Python-loop overhead.
"""

from __future__ import annotations

import os

import numpy as np

PURE_NUMPY_ENV = "ACPD_PURE_NUMPY"


def _pure_numpy_requested() -> bool:
    return os.environ.get(PURE_NUMPY_ENV, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None
    HAS_NUMBA = False


def row_dots_numpy(indptr, indices, values, w):
    """Per-sample inner products x_i . w over CSR rows."""
    n = indptr.size - 1
    if values.size == 0:
        return np.zeros(n)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    return np.bincount(rows, weights=values * w[indices], minlength=n)


def accumulate_cols_numpy(indptr, indices, values, coeffs, dim):
    """Dense sum_i coeffs[i] * x_i over CSR rows."""
    if values.size == 0:
        return np.zeros(dim)
    per_entry = values * np.repeat(coeffs, np.diff(indptr))
    return np.bincount(indices, weights=per_entry, minlength=dim)


def row_sq_norms_numpy(indptr, values):
    n = indptr.size - 1
    if values.size == 0:
        return np.zeros(n)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    return np.bincount(rows, weights=values * values, minlength=n)


def sdca_epoch_numpy(indptr, indices, values, sq_norms, labels, alpha, draws, v, sigma_prime, lam_n):
    """Closed-form coordinate steps over ``draws``; mutates ``v`` in place.

    ``v`` enters as the effective model and leaves as effective model plus
    (sigma_prime / lam_n) * A * dalpha; the accumulated dalpha is returned.
    """
    dalpha = np.zeros(alpha.size)
    scale = sigma_prime / lam_n
    for p in draws:
        lo, hi = indptr[p], indptr[p + 1]
        cols = indices[lo:hi]
        vals = values[lo:hi]
        step = (labels[p] - alpha[p] - dalpha[p] - vals @ v[cols]) / (1.0 + scale * sq_norms[p])
        dalpha[p] += step
        v[cols] += (scale * step) * vals
    return dalpha


def _row_dots_loop(indptr, indices, values, w):
    n = indptr.size - 1
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for q in range(indptr[i], indptr[i + 1]):
            acc += values[q] * w[indices[q]]
        out[i] = acc
    return out


def _accumulate_cols_loop(indptr, indices, values, coeffs, dim):
    out = np.zeros(dim)
    n = indptr.size - 1
    for i in range(n):
        c = coeffs[i]
        for q in range(indptr[i], indptr[i + 1]):
            out[indices[q]] += c * values[q]
    return out


def _row_sq_norms_loop(indptr, values):
    n = indptr.size - 1
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for q in range(indptr[i], indptr[i + 1]):
            acc += values[q] * values[q]
        out[i] = acc
    return out


def _sdca_epoch_loop(indptr, indices, values, sq_norms, labels, alpha, draws, v, sigma_prime, lam_n):
    dalpha = np.zeros(alpha.size)
    scale = sigma_prime / lam_n
    for t in range(draws.size):
        p = draws[t]
        dot = 0.0
        for q in range(indptr[p], indptr[p + 1]):
            dot += values[q] * v[indices[q]]
        step = (labels[p] - alpha[p] - dalpha[p] - dot) / (1.0 + scale * sq_norms[p])
        dalpha[p] += step
        coef = scale * step
        for q in range(indptr[p], indptr[p + 1]):
            v[indices[q]] += coef * values[q]
    return dalpha


if HAS_NUMBA:
    row_dots_numba = njit(cache=True)(_row_dots_loop)
    accumulate_cols_numba = njit(cache=True)(_accumulate_cols_loop)
    row_sq_norms_numba = njit(cache=True)(_row_sq_norms_loop)
    sdca_epoch_numba = njit(cache=True)(_sdca_epoch_loop)
else:  # pragma: no cover
    row_dots_numba = None
    accumulate_cols_numba = None
    row_sq_norms_numba = None
    sdca_epoch_numba = None

USE_NUMBA = HAS_NUMBA and not _pure_numpy_requested()

if USE_NUMBA:
    row_dots = row_dots_numba
    accumulate_cols = accumulate_cols_numba
    row_sq_norms = row_sq_norms_numba
    sdca_epoch = sdca_epoch_numba
else:
    row_dots = row_dots_numpy
    accumulate_cols = accumulate_cols_numpy
    row_sq_norms = row_sq_norms_numpy
    sdca_epoch = sdca_epoch_numpy
