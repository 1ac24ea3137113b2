"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured numbers (run with -s to see them on success).

Desk-scale protocol reproduction uses fixed seeds throughout; free
parameters not pinned by a criterion (step scale, local iterations,
regularization for the straggler/sparsity protocols, synthetic skew) are
frozen here at values chosen for seed-robust margins.
"""

import math
import time

import numpy as np

from acpd import protocol
from acpd.cli import generate_synthetic
from acpd.data import partition
from acpd.localsolver import coordinate_delta, effective_model, make_local_state
from acpd.objective import (HyperParams, convergence_step_size, duality_gap,
                            dual_value, primal_from_dual, primal_value,
                            theoretical_rounds)
from acpd.simcluster import (SimConfig, measure_time_to_gap, rounds_to_gap,
                             run_acpd, run_cocoaplus)
from conftest import (dual_dense, golden_max, local_surrogate_dense,
                      primal_dense, random_dataset, ridge_dual_optimum,
                      to_dense, w_from_alpha_dense)


class Budget:
    def __init__(self, seconds):
        self.limit = seconds
        self.start = time.monotonic()

    @property
    def elapsed(self):
        return time.monotonic() - self.start

    def check(self):
        assert self.elapsed < self.limit, f"runtime {self.elapsed:.1f}s exceeds {self.limit}s"


def shared_instance():
    return generate_synthetic(2000, 200, density=0.1, noise=0.1, seed=42)


def skewed_instance():
    return generate_synthetic(2000, 200, density=0.1, noise=0.1, seed=42,
                              freq_skew=0.8, scale_decay=0.75)


def fit_log_gap(trace, lo=1e-6, hi=1e-1):
    gaps = np.array([r.gap for r in trace.rows])
    rounds = np.array([r.round for r in trace.rows])
    m = (gaps >= lo) & (gaps <= hi)
    x, y = rounds[m], np.log10(gaps[m])
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    r2 = 1.0 - float(resid @ resid) / float((y - y.mean()) @ (y - y.mean()))
    return r2, int(m.sum())


def test_c1_oracle_correctness_small_instances():
    budget = Budget(5.0)
    worst_val = 0.0
    worst_gap = 0.0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        n, d = int(rng.integers(1, 17)), int(rng.integers(1, 17))
        ds = random_dataset(rng, n, d, density=0.6)
        a = to_dense(ds)
        lam = float(rng.uniform(0.05, 2.0))
        w = rng.standard_normal(d)
        alpha = rng.standard_normal(n)
        dp = abs(primal_value(w, ds, lam) - primal_dense(w, a, ds.labels, lam))
        dd = abs(dual_value(alpha, ds, lam) - dual_dense(alpha, a, ds.labels, lam))
        dw = float(np.max(np.abs(primal_from_dual(alpha, ds, lam)
                                 - w_from_alpha_dense(alpha, a, lam))))
        worst_val = max(worst_val, dp, dd, dw)
        alpha_star = ridge_dual_optimum(a, ds.labels, lam)
        worst_gap = max(worst_gap, duality_gap(alpha_star, ds, lam))
    assert worst_val <= 1e-12
    assert worst_gap <= 1e-9
    budget.check()
    print(f"\nACCEPT 1: PASS - oracle max dev {worst_val:.2e}, "
          f"gap at optimum {worst_gap:.2e}, {budget.elapsed:.2f}s")


def test_c2_coordinate_step_exactness():
    budget = Budget(5.0)
    worst = 0.0
    for seed in range(200):
        rng = np.random.default_rng(2000 + seed)
        n, d = int(rng.integers(2, 14)), int(rng.integers(1, 10))
        ds = random_dataset(rng, n, d, density=0.7)
        workers = int(rng.integers(1, 3))
        part = partition(ds, workers, seed=seed)[0]
        st = make_local_state(ds, part, seed_root=seed)
        st.w = 0.4 * rng.standard_normal(d)
        st.dw = 0.3 * rng.standard_normal(d)
        st.alpha = 0.6 * rng.standard_normal(part.size)
        hp = HyperParams(lam=float(rng.uniform(0.1, 1.5)),
                         gamma=float(rng.uniform(0.3, 1.0)),
                         workers=workers, group_size=workers)
        pos = int(rng.integers(0, st.size))
        sample = int(st.own[pos])
        base = 0.4 * rng.standard_normal(st.size)
        a = to_dense(ds)
        v = (effective_model(st, hp)
             + hp.sigma_prime / (hp.lam * ds.n) * (a[:, st.own] @ base))
        got = coordinate_delta(sample, st, hp, v=v, pending=base[pos])

        def surrogate(delta, _pos=pos, _base=base, _st=st, _hp=hp, _a=a, _ds=ds):
            trial = _base.copy()
            trial[_pos] += delta
            return local_surrogate_dense(trial, _st.alpha, _st.own,
                                         effective_model(_st, _hp), _a, _ds.labels,
                                         _hp.lam, _hp.workers, _hp.sigma_prime,
                                         dtype=np.longdouble)

        best = golden_max(surrogate, -50.0, 50.0)
        worst = max(worst, abs(got - best))
    assert worst <= 1e-8
    budget.check()
    print(f"\nACCEPT 2: PASS - coordinate step vs golden-section max dev "
          f"{worst:.2e} over 200 configs, {budget.elapsed:.2f}s")


def test_c3_synchronous_equivalence():
    budget = Budget(30.0)
    ds = generate_synthetic(1000, 100, density=0.2, noise=0.1, seed=7)
    hp = HyperParams(lam=1e-2, gamma=1.0, workers=4, group_size=4, epoch_len=1,
                     local_iters=300, max_outer=20, keep=None, seed=3)
    sc = SimConfig(workers=4)
    trace_a = run_acpd(ds, hp, sc)
    trace_c = run_cocoaplus(ds, hp, sc)
    gaps_a = np.array([r.gap for r in trace_a.rows])
    gaps_c = np.array([r.gap for r in trace_c.rows])
    assert len(gaps_a) == len(gaps_c) == 21
    diff = float(np.max(np.abs(gaps_a - gaps_c)))
    assert diff <= 1e-12
    budget.check()
    print(f"\nACCEPT 3: PASS - 20-round gap sequences differ by {diff:.2e}, "
          f"{budget.elapsed:.2f}s")


def test_c4_linear_convergence():
    budget = Budget(120.0)
    ds = shared_instance()
    hp = HyperParams(lam=1e-3, gamma=1.0, workers=4, group_size=2, epoch_len=10,
                     local_iters=2000, max_outer=200, keep=ds.d // 10, seed=0)
    trace = run_acpd(ds, hp, SimConfig(workers=4), gap_eps=1e-6)
    assert trace.stop_reason == "gap", "gap 1e-6 not reached within 200 epochs"
    outer = trace.rows[-1].outer
    assert outer <= 200
    r2, points = fit_log_gap(trace)
    assert r2 >= 0.9
    budget.check()
    print(f"\nACCEPT 4: PASS - R^2 {r2:.4f} over {points} rounds, gap 1e-6 at "
          f"epoch {outer}, {budget.elapsed:.1f}s")


def test_c5_straggler_resilience():
    budget = Budget(120.0)
    ds = shared_instance()
    sc = SimConfig(workers=4, latency=0.0, secs_per_byte=0.0, slowdown={0: 10.0})
    hp_a = HyperParams(lam=1e-4, gamma=1.0, workers=4, group_size=2, epoch_len=20,
                       local_iters=50, max_outer=30000, keep=ds.d // 10, seed=0)
    t_acpd = measure_time_to_gap(run_acpd(ds, hp_a, sc, gap_eps=1e-4), 1e-4)
    hp_c = HyperParams(lam=1e-4, gamma=1.0, workers=4, group_size=4, epoch_len=1,
                       local_iters=50, max_outer=300000, keep=None, seed=0)
    t_cocoa = measure_time_to_gap(run_cocoaplus(ds, hp_c, sc, gap_eps=1e-4), 1e-4)
    assert t_acpd is not None and t_cocoa is not None
    ratio = t_acpd / t_cocoa
    assert ratio <= 0.5
    budget.check()
    print(f"\nACCEPT 5: PASS - virtual time {t_acpd:.0f}s vs {t_cocoa:.0f}s, "
          f"ratio {ratio:.3f} <= 0.5, {budget.elapsed:.1f}s")


def test_c6_sparsity_robustness():
    budget = Budget(300.0)
    ds = skewed_instance()
    sc = SimConfig(workers=4, latency=0.0, secs_per_byte=0.0)
    rounds = {}
    for keep in (ds.d, ds.d // 10, ds.d // 100):
        hp = HyperParams(lam=3e-4, gamma=1.0, workers=4, group_size=2, epoch_len=20,
                         local_iters=200, max_outer=6000, keep=keep, seed=0)
        trace = run_acpd(ds, hp, sc, gap_eps=1e-4)
        rounds[keep] = rounds_to_gap(trace, 1e-4)
        assert rounds[keep] is not None, f"gap 1e-4 not reached at keep={keep}"
    ratio = rounds[ds.d // 100] / rounds[ds.d]
    assert ratio <= 2.0
    budget.check()
    print(f"\nACCEPT 6: PASS - rounds to 1e-4 at keep 200/20/2: "
          f"{rounds[200]}/{rounds[20]}/{rounds[2]}, sparsest/dense {ratio:.2f} <= 2, "
          f"{budget.elapsed:.1f}s")


def test_c7_invariant_suite():
    budget = Budget(60.0)
    ds = generate_synthetic(300, 40, density=0.3, noise=0.2, seed=11)
    hp = HyperParams(lam=5e-3, gamma=1.0, workers=4, group_size=2, epoch_len=5,
                     local_iters=60, max_outer=8, keep=6, seed=2)
    sc = SimConfig(workers=4, slowdown={0: 3.0})

    trace = run_acpd(ds, hp, sc)
    again = run_acpd(ds, hp, sc)
    serialized = [(r.round, r.outer, repr(r.seconds), repr(r.gap),
                   r.bytes_up, r.bytes_down, r.phi) for r in trace.rows]
    assert serialized == [(r.round, r.outer, repr(r.seconds), repr(r.gap),
                           r.bytes_up, r.bytes_down, r.phi) for r in again.rows]
    assert trace.max_sync_residual <= 1e-9
    assert trace.max_staleness <= hp.epoch_len - 1
    assert all(r.gap >= 0.0 for r in trace.rows)

    rng = np.random.default_rng(99)
    for _ in range(300):
        dim = int(rng.integers(1, 50))
        dw = np.where(rng.random(dim) < 0.4, 0.0, rng.standard_normal(dim))
        keep = int(rng.integers(1, dim + 1))
        mask, filt = protocol.topk_filter(dw, keep)
        rebuilt = dw.copy()
        rebuilt[mask] = 0.0
        rebuilt[filt.indices] += filt.values
        assert np.array_equal(rebuilt, dw)

    for fuzz in range(1000):
        frng = np.random.default_rng(5000 + fuzz)
        dim = int(frng.integers(1, 300))
        nnz = int(frng.integers(0, min(dim, 40) + 1))
        idx = np.sort(frng.choice(dim, size=nnz, replace=False)).astype(np.int64)
        vals = frng.standard_normal(nnz)
        vals[vals == 0.0] = 1.0
        upd = protocol.SparseUpdate(dim, idx, vals)
        back = protocol.decode(protocol.encode(upd))
        assert back.equals(upd)
        assert len(protocol.encode(upd)) == 8 + 12 * nnz

    budget.check()
    print(f"\nACCEPT 7: PASS - determinism, sync residual {trace.max_sync_residual:.2e}, "
          f"staleness {trace.max_staleness} <= {hp.epoch_len - 1}, topk conservation, "
          f"1000 codec round-trips, {budget.elapsed:.1f}s")


def test_c8_theory_bound_calculator():
    budget = Budget(1.0)
    rng = np.random.default_rng(77)
    for _ in range(50):
        workers = int(rng.integers(1, 17))
        hp = HyperParams(lam=float(rng.uniform(1e-4, 1.0)),
                         gamma=float(rng.uniform(0.05, 1.0)),
                         workers=workers,
                         group_size=int(rng.integers(1, workers + 1)),
                         epoch_len=1)
        n = int(rng.integers(1, 100000))
        mu = float(rng.uniform(0.5, 2.0))
        smax = float(rng.uniform(0.0, 10.0))
        theta = float(rng.uniform(0.0, 0.99))
        lmn = hp.lam * mu * n
        closed_form = lmn / (hp.sigma_prime * smax + lmn)
        assert convergence_step_size(hp, n, mu, smax, theta) == closed_form
        eps = float(rng.uniform(1e-9, 1e-2))
        rate = hp.workers / (hp.group_size * hp.gamma * (1.0 - theta) * closed_form)
        assert theoretical_rounds(hp, n, mu, smax, theta, eps) == rate * math.log(1.0 / eps)
    # staleness-heavy settings push the discriminant negative -> undefined
    hp = HyperParams(lam=1.0, gamma=1.0, workers=2, group_size=2, epoch_len=4)
    assert theoretical_rounds(hp, 50, 1.0, 1.0, 0.0, 1e-3) is None
    budget.check()
    print(f"\nACCEPT 8: PASS - 50 closed-form matches at machine precision, "
          f"undefined reported for negative discriminant, {budget.elapsed:.2f}s")
