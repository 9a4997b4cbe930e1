"""Poisson clock field driving the graphical construction.

Row ``x`` in ``[1, n-1]`` owns a rate-one Poisson clock on ``[0, horizon]``;
every ring carries an independent uniform mark in ``F_q``.

Randomness comes from numpy's Philox-4x64-10 counter-based generator.  The
substream of row ``x`` under seed ``s`` is ``Philox(key=(s, x))``; from it we
draw, in order, the ring count ``Poisson(horizon)``, that many
``Uniform[0, horizon)`` times (then sorted), and that many marks
``integers(0, q)``.  A field is therefore a pure function of
``(n, horizon, q, seed)`` and any single row can be regenerated alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ParameterError
from .gf2 import is_prime

PRNG_NAME = "numpy Philox4x64-10, key=(seed, row)"
_MASK64 = (1 << 64) - 1


class RingEvent(NamedTuple):
    time: float
    row: int
    mark: int


def row_generator(seed: int, row: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed & _MASK64, row & _MASK64], dtype=np.uint64)))


def stream(seed: int, tag: int) -> np.random.Generator:
    """Independent Philox stream for simulators that do not use a field.

    Tags live in the top half of the 64-bit key space so they never collide
    with row substreams.
    """
    return row_generator(seed, (1 << 63) | tag)


def _order(times: np.ndarray, rows: np.ndarray) -> np.ndarray:
    return np.lexsort((rows, times))


@dataclass(frozen=True, eq=False)
class NoiseField:
    """Immutable collection of rings, globally ordered by (time, row)."""

    n: int
    horizon: float
    q: int
    seed: Optional[int]
    times: np.ndarray
    rows: np.ndarray
    marks: np.ndarray

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"n={self.n} < 2")
        if not is_prime(self.q) or self.q > 251:
            raise ParameterError(f"q={self.q} is not a prime below 256")
        t = np.asarray(self.times, dtype=np.float64)
        r = np.asarray(self.rows, dtype=np.int64)
        m = np.asarray(self.marks, dtype=np.int64)
        if not (t.shape == r.shape == m.shape and t.ndim == 1):
            raise ParameterError("times/rows/marks must be equal-length 1-d arrays")
        if t.size:
            if t.min() < 0 or t.max() > self.horizon:
                raise ParameterError("event time outside [0, horizon]")
            if r.min() < 1 or r.max() > self.n - 1:
                raise ParameterError("row outside [1, n-1]")
            if m.min() < 0 or m.max() >= self.q:
                raise ParameterError("mark outside [0, q)")
            order = _order(t, r)
            if not np.array_equal(order, np.arange(t.size)):
                t, r, m = t[order], r[order], m[order]
        for name, a in (("times", t), ("rows", r.astype(np.int32)), ("marks", m.astype(np.uint8))):
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    # construction

    @classmethod
    def from_events(cls, n: int, horizon: float, events: Sequence, q: int = 2) -> "NoiseField":
        """Hand-built field from ``(time, row, mark)`` triples."""
        ev = list(events)
        if ev:
            t, r, m = map(np.asarray, zip(*ev))
        else:
            t = r = m = np.zeros(0)
        return cls(n, float(horizon), q, None, t, r, m)

    # access

    def __len__(self) -> int:
        return int(self.times.size)

    def __iter__(self) -> Iterator[RingEvent]:
        for t, r, m in zip(self.times.tolist(), self.rows.tolist(), self.marks.tolist()):
            yield RingEvent(t, r, m)

    def events(self) -> list:
        return list(self)

    def row_counts(self) -> np.ndarray:
        """Number of rings of each row; index 0 is row 1."""
        return np.bincount(self.rows, minlength=self.n)[1:]

    def row_times(self, x: int) -> np.ndarray:
        return self.times[self.rows == x]

    def with_marks(self, index, marks) -> "NoiseField":
        """Copy with the marks at global event positions ``index`` replaced."""
        m = self.marks.copy()
        m[np.asarray(index, dtype=np.int64)] = marks
        return NoiseField(self.n, self.horizon, self.q, self.seed, self.times, self.rows, m)

    def without(self, index) -> "NoiseField":
        """Copy with the events at global positions ``index`` deleted."""
        keep = np.ones(len(self), dtype=bool)
        keep[np.asarray(index, dtype=np.int64)] = False
        return NoiseField(self.n, self.horizon, self.q, self.seed, self.times[keep], self.rows[keep], self.marks[keep])

    def relabel(self, n: int, mapping: dict) -> "NoiseField":
        """Keep rows in ``mapping`` and rename them; used to drive East chains."""
        src = np.array(sorted(mapping), dtype=np.int64)
        keep = np.isin(self.rows, src)
        lut = np.zeros(self.n + 1, dtype=np.int64)
        for k, v in mapping.items():
            lut[k] = v
        return NoiseField(n, self.horizon, self.q, self.seed, self.times[keep], lut[self.rows[keep]], self.marks[keep])

    # serialization

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "horizon": self.horizon,
            "q": self.q,
            "seed": self.seed,
            "prng": PRNG_NAME,
            "events": [[t, r, m] for t, r, m in self],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseField":
        f = cls.from_events(d["n"], d["horizon"], [tuple(e) for e in d["events"]], q=d["q"])
        object.__setattr__(f, "seed", d.get("seed"))
        return f

    @classmethod
    def from_json(cls, s: str) -> "NoiseField":
        return cls.from_dict(json.loads(s))

    def save_npz(self, path) -> None:
        np.savez(path, n=self.n, horizon=self.horizon, q=self.q, seed=-1 if self.seed is None else self.seed,
                 times=self.times, rows=self.rows, marks=self.marks)

    @classmethod
    def load_npz(cls, path) -> "NoiseField":
        z = np.load(path)
        seed = int(z["seed"])
        return cls(int(z["n"]), float(z["horizon"]), int(z["q"]), None if seed < 0 else seed,
                   z["times"], z["rows"], z["marks"])


def _strictly_increasing(t: np.ndarray) -> np.ndarray:
    # float ties have probability ~0 but would break the per-row ordering
    for k in range(1, t.size):
        if t[k] <= t[k - 1]:
            t[k] = np.nextafter(t[k - 1], np.inf)
    return t


def sample(n: int, T: float, q: int = 2, seed: int = 0) -> NoiseField:
    """Draw a field on rows ``[1, n-1]`` and times ``[0, T]``."""
    if n < 2:
        raise ParameterError(f"n={n} < 2")
    if T < 0:
        raise ParameterError(f"negative horizon {T}")
    if not is_prime(q) or q > 251:
        raise ParameterError(f"q={q} is not a prime below 256")
    ts, rs, ms = [], [], []
    for x in range(1, n):
        g = row_generator(seed, x)
        k = int(g.poisson(T)) if T > 0 else 0
        t = np.sort(g.uniform(0.0, T, size=k))
        if k > 1 and np.any(np.diff(t) <= 0):
            t = _strictly_increasing(t)
        ts.append(t)
        rs.append(np.full(k, x, dtype=np.int64))
        ms.append(g.integers(0, q, size=k))
    return NoiseField(n, float(T), q, seed, np.concatenate(ts), np.concatenate(rs), np.concatenate(ms))


@dataclass(frozen=True, eq=False)
class NoiseView:
    """Rings of a field with row in ``rows`` and time in the closed ``span``.

    An empty row interval (``lo > hi``) or a degenerate span (``s >= t``)
    selects nothing.
    """

    field: NoiseField
    rows: tuple
    span: tuple
    mask: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.field.n

    @property
    def q(self) -> int:
        return self.field.q

    @property
    def times(self) -> np.ndarray:
        return self.field.times[self.mask]

    @property
    def event_rows(self) -> np.ndarray:
        return self.field.rows[self.mask]

    @property
    def marks(self) -> np.ndarray:
        return self.field.marks[self.mask]

    @property
    def index(self) -> np.ndarray:
        """Global positions of the selected rings in the parent field."""
        return np.nonzero(self.mask)[0]

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __iter__(self) -> Iterator[RingEvent]:
        for t, r, m in zip(self.times.tolist(), self.event_rows.tolist(), self.marks.tolist()):
            yield RingEvent(t, r, m)

    def events(self) -> list:
        return list(self)


def _as_field_view(obj):
    if isinstance(obj, NoiseView):
        return obj.field, obj.rows, obj.span
    return obj, (1, obj.n - 1), (0.0, obj.horizon)


def restrict(omega, rows=None, span=None) -> NoiseView:
    """Restrict a field (or a view, composing intervals) to rows and a time span."""
    fld, (lo, hi), (s, t) = _as_field_view(omega)
    if rows is not None:
        lo, hi = max(lo, rows[0]), min(hi, rows[1])
    if span is not None:
        s, t = max(s, float(span[0])), min(t, float(span[1]))
    if lo > hi or s >= t:
        mask = np.zeros(len(fld), dtype=bool)
    else:
        mask = (fld.rows >= lo) & (fld.rows <= hi) & (fld.times >= s) & (fld.times <= t)
    return NoiseView(fld, (lo, hi), (s, t), mask)


def adjoint(omega: NoiseField, t: float) -> NoiseField:
    """Time-reversed randomness on ``[0, t]``: each ring ``(s, x, m)`` with
    ``s <= t`` becomes ``(t - s, x, m)``."""
    if t > omega.horizon:
        raise ParameterError(f"t={t} beyond horizon {omega.horizon}")
    keep = omega.times <= t
    return NoiseField(omega.n, float(t), omega.q, None, t - omega.times[keep], omega.rows[keep], omega.marks[keep])
