"""Per-worker coordinate ascent on the quadratic local surrogate of the dual.

Each worker owns a block of samples and maximizes, over updates supported on
that block, the surrogate

    (1/n) sum_{i in own} [(a_i + da_i) y_i - (a_i + da_i)^2 / 2]
    - (lam / (2 K)) ||w_eff||^2
    - (1/n) w_eff . (A_own da)
    - (lam sigma' / 2) ||A_own da / (lam n)||^2

at the effective model w_eff = w + gamma * dw (base model plus the
still-unsent residual). A positive per-worker constant prefactor of the
surrogate is dropped throughout: it rescales the objective and cannot move
any maximizer. Along one coordinate the exact maximizer is closed-form,
which is what the solver applies for ``local_iters`` uniform draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import Dataset, Partition
from .objective import HyperParams


@dataclass
class LocalState:
    """One worker's mutable state plus cached views of its sample block."""

    worker: int
    own: np.ndarray            # sorted global sample ids
    w: np.ndarray              # base model, length d
    dw: np.ndarray             # unsent residual model delta, length d
    alpha: np.ndarray          # dual block aligned with `own`
    rng: np.random.Generator
    indptr: np.ndarray         # CSR over the owned rows
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    sq_norms: np.ndarray
    n_total: int
    dim: int

    @property
    def size(self) -> int:
        return int(self.own.size)


def make_local_state(ds: Dataset, part: Partition, seed_root: int) -> LocalState:
    indptr, indices, values = ds.sub_csr(part.idx)
    return LocalState(
        worker=part.worker,
        own=part.idx,
        w=np.zeros(ds.d),
        dw=np.zeros(ds.d),
        alpha=np.zeros(part.size),
        rng=np.random.default_rng([seed_root, part.worker]),
        indptr=indptr,
        indices=indices,
        values=values,
        labels=ds.labels[part.idx].copy(),
        sq_norms=kernels.row_sq_norms(indptr, values),
        n_total=ds.n,
        dim=ds.d,
    )


def effective_model(st: LocalState, hp: HyperParams) -> np.ndarray:
    return st.w + hp.gamma * st.dw


def solve_local(st: LocalState, hp: HyperParams, sigma_prime: float | None = None) -> np.ndarray:
    """Run ``local_iters`` exact coordinate steps; returns the dual increment.

    Deterministic given the state's generator; the state itself is not
    modified beyond advancing that generator. The running direction is
    rebuilt from the effective model on every call, so no floating-point
    drift survives across rounds.
    """
    sp = hp.sigma_prime if sigma_prime is None else sigma_prime
    if st.size == 0 or hp.local_iters == 0:
        return np.zeros(st.size)
    draws = st.rng.integers(0, st.size, size=hp.local_iters)
    v = effective_model(st, hp)
    return kernels.sdca_epoch(st.indptr, st.indices, st.values, st.sq_norms,
                              st.labels, st.alpha, draws, v, sp,
                              hp.lam * st.n_total)


def coordinate_delta(sample: int, st: LocalState, hp: HyperParams,
                     v: np.ndarray | None = None, pending: float = 0.0,
                     sigma_prime: float | None = None) -> float:
    """Exact surrogate maximizer along one owned sample's dual coordinate.

    ``v`` is the running direction (effective model plus the scaled
    contribution of increments applied so far; defaults to a fresh round)
    and ``pending`` is the increment already accumulated on this coordinate.
    A zero sample degenerates to y_i minus the current dual value.
    """
    pos = int(np.searchsorted(st.own, sample))
    if pos >= st.size or st.own[pos] != sample:
        raise ValueError(f"sample {sample} is not owned by worker {st.worker}")
    sp = hp.sigma_prime if sigma_prime is None else sigma_prime
    if v is None:
        v = effective_model(st, hp)
    lo, hi = st.indptr[pos], st.indptr[pos + 1]
    dot = float(st.values[lo:hi] @ v[st.indices[lo:hi]])
    denom = 1.0 + sp * st.sq_norms[pos] / (hp.lam * st.n_total)
    return (st.labels[pos] - (st.alpha[pos] + pending) - dot) / denom


def local_subproblem_value(delta_alpha: np.ndarray, st: LocalState, hp: HyperParams,
                           sigma_prime: float | None = None) -> float:
    """Surrogate value at the given increment (full-length, block-supported)."""
    delta = np.asarray(delta_alpha, dtype=np.float64)
    if delta.shape != (st.n_total,):
        raise ValueError(f"delta_alpha must have shape ({st.n_total},)")
    support = np.flatnonzero(delta)
    if support.size and not np.all(np.isin(support, st.own)):
        raise ValueError("delta_alpha support escapes the owned block")
    sp = hp.sigma_prime if sigma_prime is None else sigma_prime
    local = delta[st.own]
    n = st.n_total
    w_eff = effective_model(st, hp)
    z = st.alpha + local
    payoff = float(np.sum(z * st.labels - 0.5 * z * z)) / n
    reg = 0.5 * hp.lam * float(w_eff @ w_eff) / hp.workers
    a_delta = kernels.accumulate_cols(st.indptr, st.indices, st.values, local, st.dim)
    cross = float(w_eff @ a_delta) / n
    quad = 0.5 * sp * float(a_delta @ a_delta) / (hp.lam * n * n)
    return payoff - reg - cross - quad


def model_delta(st: LocalState, hp: HyperParams, dalpha: np.ndarray) -> np.ndarray:
    """Primal-side image of a dual increment: A_own dalpha / (lam n)."""
    acc = kernels.accumulate_cols(st.indptr, st.indices, st.values, dalpha, st.dim)
    return acc / (hp.lam * st.n_total)
