"""Deterministic discrete-event simulation of the one-server cluster.

Virtual time model: a worker computes for base_seconds x slowdown x jitter
per round; a b-byte message spends latency + secs_per_byte * b in flight
each way; server processing is instantaneous. Events are processed in
(timestamp, kind, worker, seq) order with a fixed kind ranking, so a given
(dataset, hyperparams, sim config) triple always produces byte-identical
traces. Duality-gap evaluation is instrumentation and consumes no virtual
time.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import data, objective, protocol
from .localsolver import make_local_state
from .objective import ConsistencyError, HyperParams

# Event kind ranks; ties at one timestamp resolve in this order, then by
# worker id, then by insertion sequence.
COMPUTE_DONE = 0
MSG_ARRIVES = 1
REPLY_ARRIVES = 2

# Max allowed infinity-norm drift between the reconstructed global model and
# the model implied by the dual variables at epoch boundaries.
SYNC_RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class SimConfig:
    """Cluster timing model.

    slowdown maps worker id to a multiplicative compute factor (>= 1);
    workers absent from the map run at factor 1. jitter_sigma > 0 draws an
    extra lognormal factor per compute from a per-worker seeded stream.
    """

    workers: int
    base_seconds: float = 1.0
    latency: float = 0.01
    secs_per_byte: float = 1e-8
    slowdown: Mapping[int, float] = field(default_factory=dict)
    jitter_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.base_seconds <= 0:
            raise ValueError("base_seconds must be positive")
        if self.latency < 0 or self.secs_per_byte < 0:
            raise ValueError("latency and secs_per_byte must be >= 0")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        for k, f in self.slowdown.items():
            if f < 1.0:
                raise ValueError(f"slowdown factor for worker {k} must be >= 1")

    def slowdown_for(self, worker: int) -> float:
        return float(self.slowdown.get(worker, 1.0))


@dataclass(frozen=True)
class TraceRow:
    round: int
    outer: int
    seconds: float
    gap: float
    bytes_up: int
    bytes_down: int
    phi: tuple[int, ...]


@dataclass
class SimTrace:
    rows: list[TraceRow]
    stop_reason: str = ""
    max_staleness: int = 0
    max_sync_residual: float = 0.0


def measure_time_to_gap(trace: SimTrace, eps: float):
    """Timestamp of the first logged row with gap <= eps, else None."""
    for row in trace.rows:
        if row.gap <= eps:
            return row.seconds
    return None


def rounds_to_gap(trace: SimTrace, eps: float):
    """Round index of the first logged row with gap <= eps, else None."""
    for row in trace.rows:
        if row.gap <= eps:
            return row.round
    return None


class _Timing:
    """Per-worker compute durations with optional seeded lognormal jitter."""

    def __init__(self, sc: SimConfig):
        self.sc = sc
        self.jitter = [np.random.default_rng([sc.seed, k]) for k in range(sc.workers)]

    def compute_seconds(self, worker: int) -> float:
        factor = self.sc.slowdown_for(worker)
        if self.sc.jitter_sigma > 0.0:
            factor *= float(self.jitter[worker].lognormal(0.0, self.sc.jitter_sigma))
        return self.sc.base_seconds * factor


def _setup(ds: data.Dataset, hp: HyperParams, sc: SimConfig):
    if hp.workers != sc.workers:
        raise ValueError(f"hp.workers={hp.workers} does not match sc.workers={sc.workers}")
    if hp.keep is not None and hp.keep > ds.d:
        raise ValueError(f"keep={hp.keep} exceeds the feature dimension {ds.d}")
    parts = data.partition(ds, hp.workers, hp.seed)
    states = [make_local_state(ds, p, hp.seed) for p in parts]
    return states


def _gap_snapshot(states, ds, hp, alpha_buf) -> float:
    for st in states:
        alpha_buf[st.own] = st.alpha
    return objective.duality_gap(alpha_buf, ds, hp.lam)


def run_acpd(ds: data.Dataset, hp: HyperParams, sc: SimConfig,
             gap_eps: float | None = None,
             time_budget: float | None = None) -> SimTrace:
    """Event-driven run of the group-commit protocol; logs one row per commit.

    Stops when the logged gap reaches gap_eps, when hp.max_outer epochs
    complete, or when virtual time passes time_budget. At every epoch
    boundary the reconstructed model (server model plus gamma-weighted
    worker residuals) is audited against the model implied by the dual
    variables.
    """
    states = _setup(ds, hp, sc)
    ss = protocol.ServerState.create(ds.d, hp.workers)
    timing = _Timing(sc)
    alpha_buf = np.zeros(ds.n)

    trace = SimTrace(rows=[TraceRow(0, 0, 0.0, _gap_snapshot(states, ds, hp, alpha_buf), 0, 0, ())])
    if gap_eps is not None and trace.rows[0].gap <= gap_eps:
        trace.stop_reason = "gap"
        return trace

    heap: list[tuple] = []
    seq = 0
    for k in range(hp.workers):
        heapq.heappush(heap, (timing.compute_seconds(k), COMPUTE_DONE, k, seq, None))
        seq += 1

    bytes_up = bytes_down = 0
    round_no = 0
    stop = None
    while heap and stop is None:
        ts, kind, worker, _, payload = heapq.heappop(heap)
        if time_budget is not None and ts > time_budget:
            stop = "time_budget"
            break
        if kind == COMPUTE_DONE:
            msg = protocol.worker_round(states[worker], hp)
            wire = protocol.encode(msg.update)
            bytes_up += len(wire)
            flight = sc.latency + sc.secs_per_byte * len(wire)
            heapq.heappush(heap, (ts + flight, MSG_ARRIVES, worker, seq, wire))
            seq += 1
        elif kind == MSG_ARRIVES:
            update = protocol.decode(payload)
            epoch = ss.l
            barrier = ss.t == hp.epoch_len - 1
            replies = protocol.server_receive(ss, protocol.WorkerMessage(worker, update), hp)
            if replies is None:
                continue
            round_no += 1
            for reply in replies:
                wire = protocol.encode(reply.update)
                bytes_down += len(wire)
                flight = sc.latency + sc.secs_per_byte * len(wire)
                heapq.heappush(heap, (ts + flight, REPLY_ARRIVES, reply.recipient, seq, wire))
                seq += 1
            gap = _gap_snapshot(states, ds, hp, alpha_buf)
            trace.rows.append(TraceRow(round_no, epoch, ts, gap, bytes_up, bytes_down, ss.last_phi))
            if barrier:
                resid = _sync_residual(ss, states, ds, hp, alpha_buf)
                trace.max_sync_residual = max(trace.max_sync_residual, resid)
                if resid > SYNC_RESIDUAL_TOL:
                    raise ConsistencyError(
                        f"sync residual {resid} exceeds {SYNC_RESIDUAL_TOL} at epoch {epoch}")
            if gap_eps is not None and gap <= gap_eps:
                stop = "gap"
            elif ss.l >= hp.max_outer:
                stop = "outer"
        else:  # REPLY_ARRIVES
            update = protocol.decode(payload)
            protocol.worker_apply_reply(states[worker], protocol.ServerReply(worker, update))
            heapq.heappush(heap, (ts + timing.compute_seconds(worker), COMPUTE_DONE, worker, seq, None))
            seq += 1

    trace.stop_reason = stop or "drained"
    trace.max_staleness = ss.max_staleness
    return trace


def _sync_residual(ss, states, ds, hp, alpha_buf) -> float:
    """Infinity-norm gap between reconstructed and dual-implied models.

    alpha_buf must already hold the current global dual snapshot.
    """
    w_rec = ss.w.copy()
    for st in states:
        w_rec += hp.gamma * st.dw
    target = objective.primal_from_dual(alpha_buf, ds, hp.lam)
    return float(np.max(np.abs(w_rec - target))) if ds.d else 0.0


def run_cocoaplus(ds: data.Dataset, hp: HyperParams, sc: SimConfig,
                  gap_eps: float | None = None,
                  time_budget: float | None = None) -> SimTrace:
    """Timed synchronous baseline; one row per round.

    Per round, virtual time advances by the slowest worker's compute time
    plus one dense-dimension message flight. Timing never feeds back into
    the math, so the gap-versus-round curve is independent of SimConfig.
    """
    states = _setup(ds, hp, sc)
    timing = _Timing(sc)
    alpha_buf = np.zeros(ds.n)
    sp = hp.gamma * hp.workers
    dense_bytes = 8 + 12 * ds.d

    trace = SimTrace(rows=[TraceRow(0, 0, 0.0, _gap_snapshot(states, ds, hp, alpha_buf), 0, 0, ())])
    if gap_eps is not None and trace.rows[0].gap <= gap_eps:
        trace.stop_reason = "gap"
        return trace

    now = 0.0
    bytes_up = bytes_down = 0
    everyone = tuple(range(hp.workers))
    stop = None
    for rnd in range(1, hp.max_outer + 1):
        slowest = max(timing.compute_seconds(k) for k in range(hp.workers))
        now += slowest + sc.latency + sc.secs_per_byte * dense_bytes
        if time_budget is not None and now > time_budget:
            stop = "time_budget"
            break
        _, up_nnz, agg_nnz = protocol.cocoaplus_round_stats(states, hp, sigma_prime=sp)
        bytes_up += sum(8 + 12 * z for z in up_nnz)
        bytes_down += hp.workers * (8 + 12 * agg_nnz)
        gap = _gap_snapshot(states, ds, hp, alpha_buf)
        trace.rows.append(TraceRow(rnd, rnd, now, gap, bytes_up, bytes_down, everyone))
        if gap_eps is not None and gap <= gap_eps:
            stop = "gap"
            break
    trace.stop_reason = stop or "outer"
    return trace
