"""Shared fixtures and independent dense-matrix oracles.

The oracles deliberately avoid the package's CSR kernels: everything here is
dense numpy matmul over an explicit (d, n) sample matrix, so agreement with
the package is a genuine two-route check.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from acpd import kernels
from acpd.data import Dataset


def to_dense(ds: Dataset) -> np.ndarray:
    """Column-per-sample dense matrix A with shape (d, n)."""
    a = np.zeros((ds.d, ds.n))
    for i in range(ds.n):
        lo, hi = ds.indptr[i], ds.indptr[i + 1]
        a[ds.indices[lo:hi], i] = ds.values[lo:hi]
    return a


def primal_dense(w, a, y, lam) -> float:
    return float(np.mean(0.5 * (a.T @ w - y) ** 2) + 0.5 * lam * w @ w)


def w_from_alpha_dense(alpha, a, lam) -> np.ndarray:
    return a @ alpha / (lam * a.shape[1])


def dual_dense(alpha, a, y, lam) -> float:
    wa = w_from_alpha_dense(alpha, a, lam)
    return float(np.mean(alpha * y - 0.5 * alpha**2) - 0.5 * lam * wa @ wa)


def ridge_dual_optimum(a, y, lam) -> np.ndarray:
    """Exact dual optimum: solve (A^T A / (lam n^2) + I/n) alpha = y / n."""
    n = a.shape[1]
    lhs = a.T @ a / (lam * n * n) + np.eye(n) / n
    return np.linalg.solve(lhs, y / n)


def local_surrogate_dense(delta, alpha_block, own, w_eff, a, y, lam, workers,
                          sigma_prime, dtype=np.float64) -> float:
    """Dense evaluation of the worker surrogate at a block-supported delta.

    ``delta`` and ``alpha_block`` are aligned with ``own`` (the worker's
    sample ids); ``a`` is the full dense (d, n) matrix. Passing
    ``dtype=np.longdouble`` gives an oracle precise enough to localize a
    maximizer well below 1e-8 despite the flat quadratic top.
    """
    n = a.shape[1]
    delta = np.asarray(delta, dtype=dtype)
    alpha_block = np.asarray(alpha_block, dtype=dtype)
    w_eff = np.asarray(w_eff, dtype=dtype)
    block = np.asarray(a[:, own], dtype=dtype)
    yb = np.asarray(y[own], dtype=dtype)
    z = alpha_block + delta
    payoff = np.sum(z * yb - 0.5 * z * z) / n
    reg = 0.5 * lam * (w_eff @ w_eff) / workers
    a_delta = block @ delta
    cross = (w_eff @ a_delta) / n
    quad = 0.5 * lam * sigma_prime * (a_delta @ a_delta) / (dtype(lam) * n) ** 2
    return payoff - reg - cross - quad  # keep the working dtype; no float64 downcast


def golden_max(f, lo, hi, iters=90) -> float:
    """Classic golden-section maximizer on [lo, hi] for unimodal f."""
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def random_dataset(rng: np.random.Generator, n: int, d: int, density: float = 0.5) -> Dataset:
    """Small random instance with unit-ball samples and +-1 labels."""
    rows = []
    for _ in range(n):
        cols = np.flatnonzero(rng.random(d) < density)
        vals = rng.uniform(-1.0, 1.0, size=cols.size)
        sq = float(vals @ vals)
        if sq > 1.0:
            vals /= math.sqrt(sq) / 0.999
        rows.append([(int(j), float(v)) for j, v in zip(cols, vals) if v != 0.0])
    labels = rng.choice([-1.0, 1.0], size=n)
    return Dataset.from_rows(rows, labels, d=d)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Trigger JIT compilation once so timed tests measure the math only."""
    indptr = np.array([0, 1], dtype=np.int64)
    indices = np.array([0], dtype=np.int32)
    values = np.array([1.0])
    w = np.zeros(1)
    kernels.row_dots(indptr, indices, values, w)
    kernels.accumulate_cols(indptr, indices, values, np.ones(1), 1)
    kernels.row_sq_norms(indptr, values)
    kernels.sdca_epoch(indptr, indices, values, np.ones(1), np.ones(1), np.zeros(1),
                       np.zeros(1, dtype=np.int64), w, 1.0, 1.0)
