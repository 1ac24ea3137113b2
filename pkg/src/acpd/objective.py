"""Objective evaluation for L2-regularized least squares and its dual.

The primal is P(w) = (1/n) sum_i 0.5 (w.x_i - y_i)^2 + (lam/2) ||w||^2 and
the dual over alpha in R^n is
D(alpha) = (1/n) sum_i (alpha_i y_i - alpha_i^2 / 2) - (lam/2) ||A alpha / (lam n)||^2,
with w(alpha) = A alpha / (lam n). The duality gap P(w(alpha)) - D(alpha)
is the convergence certificate logged by every run. This module also houses
the computable convergence-round bounds and the partition spectral-norm
estimator they need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import Dataset, Partition

# Negative gaps inside this slack are rounding noise and clamp to zero;
# anything below it indicates a real bug.
GAP_NEGATIVE_TOL = 1e-10


class ConsistencyError(RuntimeError):
    """An internal invariant (weak duality, sync audit) was violated."""


@dataclass(frozen=True)
class LossSpec:
    """Smooth per-sample loss; only least squares ships (mu = 1)."""

    mu: float = 1.0

    def value(self, a: float, y: float) -> float:
        return 0.5 * (a - y) ** 2

    def conjugate_neg(self, alpha: float, y: float) -> float:
        """-phi*(-alpha), the dual payoff of one coordinate."""
        return alpha * y - 0.5 * alpha * alpha


LEAST_SQUARES = LossSpec()


@dataclass(frozen=True)
class HyperParams:
    """Run parameters shared by the solver, protocol and simulator.

    lam         ridge regularization, > 0
    gamma       aggregation step scale in (0, 1]
    workers     cluster size K
    group_size  worker messages the server commits per step (<= workers)
    epoch_len   steps between full barriers; staleness stays below it
    local_iters coordinate steps per worker round
    max_outer   cap on outer epochs
    keep        coordinates kept per message (None = all)
    seed        master seed for partitioning and per-worker draws
    """

    lam: float
    gamma: float = 1.0
    workers: int = 1
    group_size: int = 1
    epoch_len: int = 1
    local_iters: int = 100
    max_outer: int = 200
    keep: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 1 <= self.group_size <= self.workers:
            raise ValueError("group_size must be in [1, workers]")
        if self.epoch_len < 1:
            raise ValueError("epoch_len must be >= 1")
        if self.local_iters < 0:
            raise ValueError("local_iters must be >= 0")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.keep is not None and self.keep < 1:
            raise ValueError("keep must be >= 1")

    @property
    def sigma_prime(self) -> float:
        """Separability penalty of the local subproblem: gamma * group_size."""
        return self.gamma * self.group_size


def _check_len(vec: np.ndarray, expect: int, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (expect,):
        raise ValueError(f"{name} must have shape ({expect},), got {vec.shape}")
    return vec


def primal_value(w: np.ndarray, ds: Dataset, lam: float) -> float:
    w = _check_len(w, ds.d, "w")
    dots = kernels.row_dots(ds.indptr, ds.indices, ds.values, w)
    return 0.5 * float(np.mean((dots - ds.labels) ** 2)) + 0.5 * lam * float(w @ w)


def dual_value(alpha: np.ndarray, ds: Dataset, lam: float) -> float:
    alpha = _check_len(alpha, ds.n, "alpha")
    wa = primal_from_dual(alpha, ds, lam)
    payoff = float(np.mean(alpha * ds.labels - 0.5 * alpha * alpha))
    return payoff - 0.5 * lam * float(wa @ wa)


def primal_from_dual(alpha: np.ndarray, ds: Dataset, lam: float) -> np.ndarray:
    """w(alpha) = A alpha / (lam n), accumulated over the sparse samples."""
    alpha = _check_len(alpha, ds.n, "alpha")
    return kernels.accumulate_cols(ds.indptr, ds.indices, ds.values, alpha, ds.d) / (lam * ds.n)


def duality_gap(alpha: np.ndarray, ds: Dataset, lam: float) -> float:
    """P(w(alpha)) - D(alpha); clamped to 0 within rounding slack."""
    gap = primal_value(primal_from_dual(alpha, ds, lam), ds, lam) - dual_value(alpha, ds, lam)
    if gap < -GAP_NEGATIVE_TOL:
        raise ConsistencyError(f"duality gap {gap} below the weak-duality floor")
    return max(gap, 0.0)


def convergence_step_size(hp: HyperParams, n: int, mu: float, sigma_max: float,
                          theta: float) -> float | None:
    """Geometric contraction factor s of the round bounds; None if undefined.

    With epoch_len fixed the staleness penalty shows up through a
    discriminant; when it goes negative, or the root leaves (0, 1], the
    bound does not apply to these parameters.
    """
    if not 0.0 <= theta < 1.0:
        raise ValueError("theta must be in [0, 1)")
    lmn = hp.lam * mu * n
    denom = hp.sigma_prime * sigma_max + lmn
    if denom <= 0.0:
        return None
    if hp.epoch_len == 1:
        s = lmn / denom  # drift terms vanish; exact closed form
    else:
        drift = 2.0 * hp.gamma * n * (hp.epoch_len - 1)
        disc = (drift - lmn) ** 2 - 4.0 * drift * denom / (1.0 - theta)
        if disc < 0.0:
            return None
        s = (lmn - drift + math.sqrt(disc)) / (2.0 * denom)
    if not 0.0 < s <= 1.0:
        return None
    return s


def theoretical_rounds(hp: HyperParams, n: int, mu: float, sigma_max: float,
                       theta: float, eps: float,
                       mode: str = "dual_suboptimality") -> float | None:
    """Outer-iteration lower bound for the requested accuracy, or None.

    mode "dual_suboptimality" bounds D(alpha*) - D(alpha); mode
    "duality_gap" bounds the gap itself and carries the extra log factor.
    """
    if mode not in ("dual_suboptimality", "duality_gap"):
        raise ValueError(f"unknown mode {mode!r}")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    s = convergence_step_size(hp, n, mu, sigma_max, theta)
    if s is None:
        return None
    rate = hp.workers / (hp.group_size * hp.gamma * (1.0 - theta) * s)
    if mode == "dual_suboptimality":
        return rate * math.log(1.0 / eps)
    return rate * math.log(rate / eps)


def estimate_sigma_max(partitions: list[Partition], ds: Dataset,
                       iters: int = 100, seed: int = 0) -> float:
    """Largest squared partition singular value, by seeded power iteration.

    Runs z <- A_k A_k^T z per partition and reports the best Rayleigh
    quotient ||A_k^T z||^2 / ||z||^2 seen last; the estimate is monotone
    non-decreasing in ``iters``. Empty partitions contribute 0.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    best = 0.0
    for part in partitions:
        if part.idx.size == 0:
            continue
        indptr, indices, values = ds.sub_csr(part.idx)
        rng = np.random.default_rng([seed, part.worker])
        z = rng.standard_normal(ds.d)
        ray = 0.0
        for _ in range(iters):
            zz = float(z @ z)
            if zz == 0.0:
                break
            u = kernels.row_dots(indptr, indices, values, z)
            ray = float(u @ u) / zz
            z = kernels.accumulate_cols(indptr, indices, values, u, ds.d)
            norm = float(np.linalg.norm(z))
            if norm == 0.0:
                break
            z /= norm
        best = max(best, ray)
    return best
