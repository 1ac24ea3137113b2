"""LIBSVM-format parsing, sample normalization, and worker partitioning.

Samples live in a row-major CSR layout (``indptr``/``indices``/``values``)
with labels stored as -1.0/+1.0. Feature indices are 1-based on disk and
0-based in memory. All functions here are pure: they never mutate their
inputs and are safe to call from multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Slack allowed on the squared-norm unit bound after normalization.
NORM_TOL = 1e-12


class ParseError(ValueError):
    """Malformed LIBSVM text; remembers the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sparse sample matrix with binary labels.

    Invariants: feature indices are strictly increasing within each sample
    and lie in [0, d); no explicit zeros are stored; labels are -1.0/+1.0.
    """

    n: int
    d: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indptr", np.ascontiguousarray(self.indptr, dtype=np.int64))
        object.__setattr__(self, "indices", np.ascontiguousarray(self.indices, dtype=np.int32))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        object.__setattr__(self, "labels", np.ascontiguousarray(self.labels, dtype=np.float64))
        if self.indptr.size != self.n + 1 or self.indptr[0] != 0 or self.indptr[-1] != self.values.size:
            raise ValueError("inconsistent indptr")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be non-decreasing")
        if self.indices.size != self.values.size:
            raise ValueError("indices/values length mismatch")
        if self.labels.size != self.n:
            raise ValueError("labels length mismatch")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= self.d:
                raise ValueError("feature index out of range")
            gaps = np.diff(self.indices)
            starts = self.indptr[1:-1] - 1
            starts = starts[(starts >= 0) & (starts < gaps.size)]
            interior = np.ones(gaps.size, dtype=bool)
            interior[starts] = False
            if np.any(gaps[interior] <= 0):
                raise ValueError("feature indices must be strictly increasing within a sample")
        if np.any(self.values == 0.0):
            raise ValueError("explicit zeros are not stored")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite feature value")
        if not np.all(np.abs(self.labels) == 1.0):
            raise ValueError("labels must be -1 or +1")

    @classmethod
    def from_rows(cls, rows, labels, d=None) -> "Dataset":
        """Build from a sequence of [(index, value), ...] rows (0-based)."""
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        idx_chunks, val_chunks = [], []
        for i, row in enumerate(rows):
            indptr[i + 1] = indptr[i] + len(row)
            for j, v in row:
                idx_chunks.append(j)
                val_chunks.append(v)
        dim = d if d is not None else (max(idx_chunks) + 1 if idx_chunks else 0)
        return cls(len(rows), dim, indptr,
                   np.asarray(idx_chunks, dtype=np.int32),
                   np.asarray(val_chunks, dtype=np.float64),
                   np.asarray(labels, dtype=np.float64))

    def sample(self, i: int) -> list[tuple[int, float]]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return [(int(j), float(v)) for j, v in zip(self.indices[lo:hi], self.values[lo:hi])]

    def row_sq_norms(self) -> np.ndarray:
        if self.values.size == 0:
            return np.zeros(self.n)
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return np.bincount(rows, weights=self.values * self.values, minlength=self.n)

    def sub_csr(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR arrays restricted to the given sample rows, in their order."""
        rows = np.asarray(rows, dtype=np.int64)
        counts = np.diff(self.indptr)[rows]
        sub_indptr = np.zeros(rows.size + 1, dtype=np.int64)
        np.cumsum(counts, out=sub_indptr[1:])
        total = int(sub_indptr[-1])
        if total == 0:
            return sub_indptr, np.empty(0, dtype=np.int32), np.empty(0, dtype=np.float64)
        flat = (np.repeat(self.indptr[rows], counts)
                + np.arange(total, dtype=np.int64)
                - np.repeat(sub_indptr[:-1], counts))
        return sub_indptr, self.indices[flat], self.values[flat]

    def equals(self, other: "Dataset") -> bool:
        return (self.n == other.n and self.d == other.d
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.labels, other.labels))


def _parse_label(token: str, lineno: int) -> float:
    try:
        raw = float(token)
    except ValueError:
        raise ParseError(lineno, f"bad label {token!r}") from None
    if raw == 1.0:
        return 1.0
    if raw == -1.0 or raw == 0.0:  # 0/1 labels map to -1/+1
        return -1.0
    raise ParseError(lineno, f"label must be one of -1, 0, +1, got {token!r}")


def parse_libsvm(text: str | bytes, n_features: int | None = None) -> Dataset:
    """Parse LIBSVM text (``<label> <idx>:<val> ...`` per line).

    ``n_features`` overrides the inferred dimension (useful when a shard
    does not contain the globally largest feature index). Explicit zero
    values are dropped after the ordering check.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    labels: list[float] = []
    idx_all: list[int] = []
    val_all: list[float] = []
    indptr = [0]
    max_seen = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        labels.append(_parse_label(tokens[0], lineno))
        prev = 0
        for tok in tokens[1:]:
            head, sep, tail = tok.partition(":")
            if not sep:
                raise ParseError(lineno, f"expected idx:value, got {tok!r}")
            try:
                idx = int(head)
                val = float(tail)
            except ValueError:
                raise ParseError(lineno, f"bad idx:value pair {tok!r}") from None
            if idx < 1:
                raise ParseError(lineno, f"feature index must be >= 1, got {idx}")
            if idx <= prev:
                raise ParseError(lineno, "feature indices must be strictly increasing")
            if not np.isfinite(val):
                raise ParseError(lineno, f"non-finite value in {tok!r}")
            prev = idx
            max_seen = max(max_seen, idx)
            if val != 0.0:
                idx_all.append(idx - 1)
                val_all.append(val)
        indptr.append(len(idx_all))
    if not labels:
        raise ValueError("empty input: no samples")
    if n_features is not None:
        if n_features < max_seen:
            raise ValueError(f"n_features={n_features} smaller than max feature index {max_seen}")
        dim = n_features
    else:
        dim = max_seen
    return Dataset(len(labels), dim,
                   np.asarray(indptr, dtype=np.int64),
                   np.asarray(idx_all, dtype=np.int32),
                   np.asarray(val_all, dtype=np.float64),
                   np.asarray(labels, dtype=np.float64))


def write_libsvm(ds: Dataset) -> str:
    """Serialize back to LIBSVM text; parse(write(ds)) reproduces ds exactly."""
    lines = []
    for i in range(ds.n):
        lo, hi = ds.indptr[i], ds.indptr[i + 1]
        parts = ["+1" if ds.labels[i] > 0 else "-1"]
        parts.extend(f"{int(j) + 1}:{float(v)!r}" for j, v in zip(ds.indices[lo:hi], ds.values[lo:hi]))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def normalize(ds: Dataset) -> Dataset:
    """Scale samples with ||x||^2 > 1 + NORM_TOL down to the unit sphere.

    Samples already inside the unit ball (and all-zero samples) are left
    untouched, which makes the operation exactly idempotent.
    """
    sq = ds.row_sq_norms()
    hot = sq > 1.0 + NORM_TOL
    if not hot.any():
        return ds
    divisor = np.ones(ds.n)
    divisor[hot] = np.sqrt(sq[hot])
    values = ds.values / np.repeat(divisor, np.diff(ds.indptr))
    return Dataset(ds.n, ds.d, ds.indptr, ds.indices, values, ds.labels)


def scaled_count(ds: Dataset) -> int:
    """Number of samples normalize() would rescale."""
    return int(np.count_nonzero(ds.row_sq_norms() > 1.0 + NORM_TOL))


@dataclass(frozen=True, eq=False)
class Partition:
    """Sample indices owned by one worker (sorted, disjoint across workers)."""

    worker: int
    idx: np.ndarray

    @property
    def size(self) -> int:
        return int(self.idx.size)


def partition(ds: Dataset, workers: int, seed: int) -> list[Partition]:
    """Shuffle sample ids with the seeded generator, deal them round-robin."""
    if workers < 1 or workers > ds.n:
        raise ValueError(f"workers must be in [1, n={ds.n}], got {workers}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return deal(perm, workers)


def deal(perm: np.ndarray, workers: int) -> list[Partition]:
    """Round-robin deal of an id permutation; split sizes differ by <= 1."""
    return [Partition(k, np.sort(np.asarray(perm[k::workers], dtype=np.int64)))
            for k in range(workers)]
