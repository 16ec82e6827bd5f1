"""Domain types, CSV ingestion, validation, fold assignment, probability trimming.

Observed data are tuples ``(q, x, delta, a, z)``: study-entry (left truncation)
time, followed-up time ``min(event, censoring)``, event indicator, binary
treatment, and a fixed-dimension covariate vector. A subject is in the data
only if its entry time is strictly below its event time, so ``q < x`` always.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ObservedRecord",
    "ObservedDataset",
    "FullRecord",
    "FullSample",
    "Transform",
    "FoldAssignment",
    "ValidationReport",
    "load_observed_csv",
    "write_observed_csv",
    "validate",
    "make_folds",
    "trim_probability",
    "rng_stream",
]


class SchemaError(ValueError):
    """CSV header does not match the required column layout."""


class ParseError(ValueError):
    """CSV body cell could not be parsed as a number."""


class DomainError(ValueError):
    """A value lies outside its admissible domain."""


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator (Philox4x32-10) keyed by (seed, stream).

    Independent streams are addressed by key, not by sequential jumps, so
    parallel tasks reduce order-independently and record-level regeneration
    is possible.
    """
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ObservedRecord:
    """One subject's observed left-truncated right-censored tuple."""

    q: float
    x: float
    delta: int
    a: int
    z: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservedRecord):
            return NotImplemented
        return (
            self.q == other.q
            and self.x == other.x
            and self.delta == other.delta
            and self.a == other.a
            and np.array_equal(self.z, other.z)
        )


@dataclass(frozen=True)
class FullRecord:
    """Pre-truncation draw with both potential event times; simulation only."""

    t1: float
    t0: float
    q: float
    d: float
    a: int
    z: np.ndarray


class ObservedDataset:
    """Column-store of observed records; immutable after construction."""

    def __init__(self, q, x, delta, a, z):
        self.q = np.asarray(q, dtype=np.float64)
        self.x = np.asarray(x, dtype=np.float64)
        self.delta = np.asarray(delta, dtype=np.int64)
        self.a = np.asarray(a, dtype=np.int64)
        self.z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if self.z.shape[0] != self.q.shape[0] and self.z.shape[1] == self.q.shape[0]:
            self.z = self.z.T
        n = self.q.shape[0]
        if not (self.x.shape[0] == self.delta.shape[0] == self.a.shape[0] == self.z.shape[0] == n):
            raise ValueError("column lengths differ")
        for arr in (self.q, self.x, self.delta, self.a, self.z):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    def record(self, i: int) -> ObservedRecord:
        return ObservedRecord(
            q=float(self.q[i]), x=float(self.x[i]), delta=int(self.delta[i]),
            a=int(self.a[i]), z=self.z[i].copy(),
        )

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return (self.record(i) for i in range(self.n))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservedDataset):
            return NotImplemented
        return (
            np.array_equal(self.q, other.q)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.delta, other.delta)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.z, other.z)
        )

    def subset(self, idx) -> "ObservedDataset":
        idx = np.asarray(idx)
        return ObservedDataset(self.q[idx], self.x[idx], self.delta[idx], self.a[idx], self.z[idx])

    @classmethod
    def from_records(cls, records) -> "ObservedDataset":
        records = list(records)
        return cls(
            q=[r.q for r in records],
            x=[r.x for r in records],
            delta=[r.delta for r in records],
            a=[r.a for r in records],
            z=np.array([r.z for r in records], dtype=np.float64).reshape(len(records), -1),
        )


class FullSample:
    """Column-store of pre-truncation draws (simulation only)."""

    def __init__(self, t1, t0, q, d, a, z):
        self.t1 = np.asarray(t1, dtype=np.float64)
        self.t0 = np.asarray(t0, dtype=np.float64)
        self.q = np.asarray(q, dtype=np.float64)
        self.d = np.asarray(d, dtype=np.float64)
        self.a = np.asarray(a, dtype=np.int64)
        self.z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        for arr in (self.t1, self.t0, self.q, self.d, self.a, self.z):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.t1.shape[0]

    def __len__(self) -> int:
        return self.n

    def record(self, i: int) -> FullRecord:
        return FullRecord(
            t1=float(self.t1[i]), t0=float(self.t0[i]), q=float(self.q[i]),
            d=float(self.d[i]), a=int(self.a[i]), z=self.z[i].copy(),
        )


class Transform:
    """Bounded outcome transformation applied to event times.

    Kinds: ``survival_indicator(t0)`` is ``1(t > t0)``; ``rmst(t0)`` is
    ``min(t, t0)``; ``log`` is ``ln(t)`` and requires strictly positive times.
    """

    KINDS = ("survival_indicator", "rmst", "log")

    def __init__(self, kind: str, t0: float | None = None):
        if kind not in self.KINDS:
            raise DomainError(f"unknown transform kind {kind!r}")
        if kind in ("survival_indicator", "rmst"):
            if t0 is None or not math.isfinite(t0):
                raise DomainError(f"transform {kind!r} requires a finite threshold t0")
        self.kind = kind
        self.t0 = float(t0) if t0 is not None else None

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "survival_indicator":
            out = (t > self.t0).astype(np.float64)
        elif self.kind == "rmst":
            out = np.minimum(t, self.t0)
        else:
            if np.any(t <= 0.0):
                raise DomainError("log transform requires strictly positive times")
            out = np.log(t)
        return out if out.ndim else float(out)

    def __repr__(self) -> str:
        if self.kind == "log":
            return "Transform(log)"
        return f"Transform({self.kind}, t0={self.t0})"

    @classmethod
    def from_spec(cls, spec: dict) -> "Transform":
        kind = spec.get("kind")
        return cls(kind, spec.get("t0"))


@dataclass(frozen=True)
class FoldAssignment:
    n: int
    k: int
    labels: np.ndarray
    seed: int

    def indices(self, fold: int) -> np.ndarray:
        """Row indices belonging to fold ``fold`` (1-based)."""
        return np.nonzero(self.labels == fold)[0]


@dataclass
class ValidationReport:
    """Per-record rule violations plus dataset-level summary statistics."""

    n: int
    violations: list[tuple[int, str]] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "violations": [[i, rule] for i, rule in self.violations],
                "summary": self.summary,
            }
        )


_HEADER_FIXED = ("q", "x", "delta", "a")


def _expected_header(p: int) -> list[str]:
    return list(_HEADER_FIXED) + [f"z{j}" for j in range(1, p + 1)]


def load_observed_csv(path, p: int) -> ObservedDataset:
    """Load observed records from CSV with header ``q,x,delta,a,z1,...,zp``.

    Column order is fixed and extra columns are rejected. Values use the dot
    decimal separator regardless of locale.
    """
    expected = _expected_header(p)
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file, missing header") from None
        header = [h.strip() for h in header]
        if header != expected:
            missing = [c for c in expected if c not in header]
            extra = [c for c in header if c not in expected]
            parts = []
            if missing:
                parts.append(f"missing column(s) {missing}")
            if extra:
                parts.append(f"unexpected column(s) {extra}")
            if not parts:
                parts.append(f"columns out of order, expected {expected}")
            raise SchemaError("; ".join(parts))
        rows = []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ParseError(f"row {rownum}: expected {len(expected)} cells, got {len(row)}")
            vals = []
            for colnum, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"row {rownum}, column {expected[colnum]!r}: non-numeric cell {cell!r}"
                    ) from None
            rows.append(vals)
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(expected))
    delta = data[:, 2]
    a = data[:, 3]
    for name, col in (("delta", delta), ("a", a)):
        bad = ~np.isin(col, (0.0, 1.0))
        if np.any(bad):
            i = int(np.nonzero(bad)[0][0])
            raise DomainError(f"row {i + 2}: {name}={col[i]!r} outside {{0,1}}")
    return ObservedDataset(q=data[:, 0], x=data[:, 1], delta=delta, a=a, z=data[:, 4:])


def write_observed_csv(path, dataset: ObservedDataset) -> None:
    """Write a dataset in the load_observed_csv schema (lossless round-trip)."""
    header = _expected_header(dataset.p)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            writer.writerow(
                [repr(float(dataset.q[i])), repr(float(dataset.x[i])),
                 int(dataset.delta[i]), int(dataset.a[i])]
                + [repr(float(v)) for v in dataset.z[i]]
            )


def validate(dataset: ObservedDataset, time_window: float = 1e6) -> ValidationReport:
    """Check every record against the observable invariants; never raises.

    Rules: ``q < x`` strictly, finite nonnegative times inside a bounded
    window, indicator domains, and no missing covariate entries. Violations
    are data, not errors; estimators refuse datasets with a nonempty report.
    """
    violations: list[tuple[int, str]] = []
    q, x, delta, a, z = dataset.q, dataset.x, dataset.delta, dataset.a, dataset.z
    for i in range(dataset.n):
        if not (np.isfinite(q[i]) and np.isfinite(x[i])):
            violations.append((i, "times finite"))
            continue
        if q[i] < 0 or x[i] < 0:
            violations.append((i, "times nonnegative"))
        if x[i] > time_window or q[i] > time_window:
            violations.append((i, "times within window"))
        if not q[i] < x[i]:
            violations.append((i, "q < x"))
        if delta[i] not in (0, 1):
            violations.append((i, "delta in {0,1}"))
        if a[i] not in (0, 1):
            violations.append((i, "a in {0,1}"))
        if not np.all(np.isfinite(z[i])):
            violations.append((i, "z has no missing entries"))
    n_trunc_fail = sum(1 for _, rule in violations if rule == "q < x")
    summary = {
        "truncation_ordering_failures": n_trunc_fail,
        "censoring_rate": float(np.mean(dataset.delta == 0)) if dataset.n else float("nan"),
        "treated_fraction": float(np.mean(dataset.a == 1)) if dataset.n else float("nan"),
    }
    return ValidationReport(n=dataset.n, violations=violations, summary=summary)


def make_folds(n: int, k: int, seed: int) -> FoldAssignment:
    """Balanced fold labels in ``{1..k}`` via random permutation + round robin."""
    if k < 2:
        raise ValueError(f"fold count k={k} must be at least 2")
    if k > n:
        raise ValueError(f"fold count k={k} exceeds n={n}")
    rng = rng_stream(seed, stream=0x0F01D5)
    perm = rng.permutation(n)
    labels = np.empty(n, dtype=np.int64)
    labels[perm] = (np.arange(n) % k) + 1
    labels.setflags(write=False)
    return FoldAssignment(n=n, k=k, labels=labels, seed=seed)


def trim_probability(p, floor: float):
    """Floor an estimated probability used in a denominator.

    Values outside [0, 1] are clamped first; idempotent and monotone in p.
    """
    if not (0.0 < floor < 0.5):
        raise ValueError(f"trim floor {floor} outside (0, 0.5)")
    arr = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0)
    out = np.maximum(arr, floor)
    return out if out.ndim else float(out)
