"""Wire codec, top-k message filter, group-commit server, worker round, and
the synchronous baseline round.

Server accounting note: when a step commits, its aggregate gamma-scaled
update is added to *every* per-worker catch-up buffer, the senders' own
buffers included. The reply a worker receives therefore restores its base
model to the exact server model at its commit step: the worker's own
filtered contribution arrives back exactly once, while the unfiltered
remainder stays local as residual, so nothing is double-applied. With
group_size equal to the cluster, epoch_len 1 and no filtering, the protocol
coincides with the synchronous baseline round bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .localsolver import LocalState, model_delta, solve_local
from .objective import HyperParams


class ProtocolError(RuntimeError):
    """A protocol invariant was violated (duplicate sender, misrouted reply)."""


class DecodeError(ValueError):
    """The byte buffer is not a valid encoded update."""


@dataclass(frozen=True, eq=False)
class SparseUpdate:
    """Filtered model delta: strictly increasing indices, nonzero values."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", np.ascontiguousarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices/values must be 1-d and equal length")
        if self.indices.size:
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise ValueError("index out of range")
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be strictly increasing")
        if np.any(self.values == 0.0):
            raise ValueError("explicit zeros are not stored")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite value")

    @classmethod
    def from_dense(cls, vec: np.ndarray) -> "SparseUpdate":
        idx = np.flatnonzero(vec)
        return cls(vec.size, idx, vec[idx].copy())

    def add_to(self, target: np.ndarray) -> None:
        target[self.indices] += self.values

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def nbytes(self) -> int:
        return 8 + 12 * self.nnz

    def equals(self, other: "SparseUpdate") -> bool:
        return (self.dim == other.dim
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))


_HEADER = struct.Struct("<II")
_ENTRY = np.dtype([("idx", "<u4"), ("val", "<f8")])  # packed, 12 bytes


def encode(update: SparseUpdate) -> bytes:
    """Little-endian wire form: u32 dim, u32 nnz, then (u32 idx, f64 val)."""
    if update.dim >= 1 << 32:
        raise ValueError("dim does not fit the u32 wire field")
    arr = np.empty(update.nnz, dtype=_ENTRY)
    arr["idx"] = update.indices
    arr["val"] = update.values
    return _HEADER.pack(update.dim, update.nnz) + arr.tobytes()


def decode(buf: bytes) -> SparseUpdate:
    if len(buf) < _HEADER.size:
        raise DecodeError(f"buffer too short for header ({len(buf)} bytes)")
    dim, nnz = _HEADER.unpack_from(buf)
    if len(buf) != _HEADER.size + _ENTRY.itemsize * nnz:
        raise DecodeError(f"expected {_HEADER.size + _ENTRY.itemsize * nnz} bytes, got {len(buf)}")
    arr = np.frombuffer(buf, dtype=_ENTRY, count=nnz, offset=_HEADER.size)
    try:
        return SparseUpdate(dim, arr["idx"].astype(np.int64), arr["val"].astype(np.float64))
    except ValueError as exc:
        raise DecodeError(str(exc)) from None


def topk_filter(dw: np.ndarray, keep: int) -> tuple[np.ndarray, SparseUpdate]:
    """Mask and update for the ``keep`` largest-magnitude coordinates.

    Exactly min(keep, nnz) bits are set; ties at the threshold break toward
    the lower index. The threshold comes from an introselect partition, not
    a full sort.
    """
    dim = dw.size
    if not 1 <= keep <= dim:
        raise ValueError(f"keep must be in [1, {dim}], got {keep}")
    mag = np.abs(dw)
    m = min(keep, int(np.count_nonzero(mag)))
    mask = np.zeros(dim, dtype=bool)
    if m == 0:
        return mask, SparseUpdate(dim, np.empty(0, dtype=np.int64), np.empty(0))
    cut = np.partition(mag, dim - m)[dim - m]
    above = np.flatnonzero(mag > cut)
    at_cut = np.flatnonzero(mag == cut)
    sel = np.concatenate([above, at_cut[: m - above.size]])
    sel.sort()
    mask[sel] = True
    return mask, SparseUpdate(dim, sel, dw[sel].copy())


@dataclass(frozen=True)
class WorkerMessage:
    sender: int
    update: SparseUpdate


@dataclass(frozen=True)
class ServerReply:
    recipient: int
    update: SparseUpdate


@dataclass
class ServerState:
    """Group-commit server: commits once group_size messages arrive, or all
    workers on the last step of each epoch."""

    w: np.ndarray
    delta_hat: np.ndarray        # (workers, d) per-worker catch-up buffers
    batch: np.ndarray            # unscaled sum of the current step's updates
    phi: list[int] = field(default_factory=list)
    t: int = 0                   # step within the epoch
    l: int = 0                   # completed epochs
    step: int = 0                # global commit count
    model_stamp: np.ndarray | None = None  # step whose model each worker holds
    max_staleness: int = 0
    last_phi: tuple[int, ...] = ()

    @classmethod
    def create(cls, dim: int, workers: int) -> "ServerState":
        return cls(w=np.zeros(dim),
                   delta_hat=np.zeros((workers, dim)),
                   batch=np.zeros(dim),
                   model_stamp=np.zeros(workers, dtype=np.int64))


def server_receive(ss: ServerState, msg: WorkerMessage, hp: HyperParams):
    """Feed one arrival; returns the replies when this completes a step."""
    if msg.sender in ss.phi:
        raise ProtocolError(f"duplicate message from worker {msg.sender} within one step")
    if msg.update.dim != ss.w.size:
        raise ValueError("update dimension does not match the server model")
    ss.phi.append(msg.sender)
    msg.update.add_to(ss.batch)
    threshold = hp.workers if ss.t == hp.epoch_len - 1 else hp.group_size
    if len(ss.phi) < threshold:
        return None
    return _commit(ss, hp)


def _commit(ss: ServerState, hp: HyperParams) -> list[ServerReply]:
    staleness = int((ss.step - ss.model_stamp).max())
    ss.max_staleness = max(ss.max_staleness, staleness)
    if staleness > hp.epoch_len - 1:
        raise ProtocolError(f"staleness {staleness} exceeds bound {hp.epoch_len - 1}")
    scaled = hp.gamma * ss.batch
    ss.w += scaled
    ss.delta_hat += scaled
    replies = []
    for k in ss.phi:
        replies.append(ServerReply(k, SparseUpdate.from_dense(ss.delta_hat[k])))
        ss.delta_hat[k] = 0.0
        ss.model_stamp[k] = ss.step + 1
    ss.last_phi = tuple(ss.phi)
    ss.phi = []
    ss.batch[:] = 0.0
    ss.step += 1
    ss.t += 1
    if ss.t == hp.epoch_len:
        ss.t = 0
        ss.l += 1
    return replies


def server_step(ss: ServerState, arrivals, hp: HyperParams):
    """Consume arrivals until a step commits; returns (state, replies)."""
    for msg in arrivals:
        replies = server_receive(ss, msg, hp)
        if replies is not None:
            return ss, replies
    raise ProtocolError("arrival stream ended before the group filled")


def worker_round(st: LocalState, hp: HyperParams) -> WorkerMessage:
    """One worker round: solve, fold into the residual, filter, emit.

    The coordinates masked out by the filter stay behind in ``st.dw`` and
    ride along in later messages; filtered + residual always equals the
    pre-filter delta exactly.
    """
    dalpha = solve_local(st, hp)
    st.alpha += hp.gamma * dalpha
    if dalpha.size:
        st.dw += model_delta(st, hp, dalpha)
    keep = st.dim if hp.keep is None else hp.keep
    mask, filtered = topk_filter(st.dw, keep)
    st.dw[mask] = 0.0
    return WorkerMessage(st.worker, filtered)


def worker_apply_reply(st: LocalState, reply: ServerReply) -> None:
    if reply.recipient != st.worker:
        raise ProtocolError(f"reply for worker {reply.recipient} delivered to {st.worker}")
    if reply.update.dim != st.dim:
        raise ValueError("reply dimension does not match the local model")
    reply.update.add_to(st.w)


def cocoaplus_round_stats(states: list[LocalState], hp: HyperParams,
                          sigma_prime: float | None = None):
    """Synchronous baseline round; returns (new_w, per-worker nnz, agg nnz).

    Every worker solves against the shared model with separability penalty
    gamma * workers, the raw deltas are reduced, and the result is broadcast.
    """
    sp = hp.gamma * hp.workers if sigma_prime is None else sigma_prime
    dim = states[0].dim
    batch = np.zeros(dim)
    up_nnz = []
    for st in states:
        dalpha = solve_local(st, hp, sigma_prime=sp)
        st.alpha += hp.gamma * dalpha
        if dalpha.size:
            raw = model_delta(st, hp, dalpha)
            batch += raw
            up_nnz.append(int(np.count_nonzero(raw)))
        else:
            up_nnz.append(0)
    new_w = states[0].w + hp.gamma * batch
    for st in states:
        st.w = new_w.copy()
    return new_w, up_nnz, int(np.count_nonzero(batch))


def cocoaplus_round(states: list[LocalState], hp: HyperParams,
                    sigma_prime: float | None = None) -> np.ndarray:
    """Synchronous baseline round; returns the updated shared model."""
    new_w, _, _ = cocoaplus_round_stats(states, hp, sigma_prime)
    return new_w
