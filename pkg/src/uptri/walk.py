"""The upper-triangular matrix walk under a shared noise field.

At a ring ``(s, x, c)`` row ``x`` receives ``c`` times row ``x + 1``.  States
are column blocks: a sub-matrix of ``M`` on tracked columns
``i_1 < ... < i_k``.  Rows and columns are numbered from 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numba
import numpy as np

from . import east, noise
from .errors import DimensionError, ParameterError, SizeError
from .gf2 import BitVec, FqVec, rank, rank_fq

__all__ = [
    "ColumnBlock",
    "UnitUpperMatrix",
    "Trajectory",
    "ColumnDecomposition",
    "DecompositionTerm",
    "primal_map",
    "adjoint_map",
    "evolve",
    "evolve_fq",
    "evolve_discrete",
    "column_noise",
    "column_marginal",
    "decompose_column",
    "last_one_pattern",
    "span_certificate",
    "sample_states",
    "duality_check",
]


@dataclass(eq=False)
class ColumnBlock:
    """Columns ``indices`` of an ``n x n`` uni-upper-triangular matrix over F_q.

    ``data[x - 1, j]`` is the entry ``(x, indices[j])``.
    """

    n: int
    indices: tuple
    q: int = 2
    data: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.indices = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ParameterError(f"column indices {self.indices} not strictly increasing")
        if self.indices and not (1 <= self.indices[0] and self.indices[-1] <= self.n):
            raise ParameterError(f"columns {self.indices} outside [1, {self.n}]")
        if self.data is None:
            self.data = _identity_data(self.n, self.indices)
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if self.data.shape != (self.n, len(self.indices)):
            raise DimensionError(f"data shape {self.data.shape} != {(self.n, len(self.indices))}")
        self.check()

    @classmethod
    def identity(cls, n: int, indices: Sequence[int], q: int = 2) -> "ColumnBlock":
        return cls(n, tuple(indices), q)

    @classmethod
    def uniform(cls, n: int, indices: Sequence[int], rng: np.random.Generator, q: int = 2) -> "ColumnBlock":
        """A draw from the uniform (stationary) measure on the block."""
        b = cls(n, tuple(indices), q)
        free = b.free_mask()
        b.data[free] = rng.integers(0, q, size=int(free.sum()), dtype=np.uint8)
        return b

    @property
    def k(self) -> int:
        return len(self.indices)

    def free_mask(self) -> np.ndarray:
        """Boolean (n, k) mask of entries strictly above the diagonal."""
        x = np.arange(1, self.n + 1)[:, None]
        return x < np.asarray(self.indices)[None, :]

    def check(self) -> None:
        """Raise unless the block has ones on its diagonal and zeros below."""
        if self.data.size and self.data.max() >= self.q:
            raise ParameterError("entry outside [0, q)")
        for j, i in enumerate(self.indices):
            if self.data[i - 1, j] != 1 or self.data[i:, j].any():
                raise ParameterError(f"column {i} is not unit upper triangular")

    def copy(self) -> "ColumnBlock":
        return type(self)(self.n, self.indices, self.q, self.data.copy())

    def column(self, i: int):
        """Tracked column ``i`` (a matrix column index) as a vector."""
        j = self.indices.index(i)
        if self.q == 2:
            return BitVec.from_bits(self.data[:, j])
        return FqVec(self.n, self.q, self.data[:, j])

    def sub(self, indices: Sequence[int]) -> "ColumnBlock":
        pos = [self.indices.index(i) for i in indices]
        return ColumnBlock(self.n, tuple(indices), self.q, self.data[:, pos].copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ColumnBlock):
            return NotImplemented
        return (self.n, self.indices, self.q) == (other.n, other.indices, other.q) and bool(
            np.array_equal(self.data, other.data)
        )

    def to_dense(self) -> np.ndarray:
        return self.data.copy()


class UnitUpperMatrix(ColumnBlock):
    """The full matrix: every column tracked."""

    def __init__(self, n: int, q: int = 2, data: Optional[np.ndarray] = None):
        super().__init__(n, tuple(range(1, n + 1)), q, data)

    @classmethod
    def identity(cls, n: int, q: int = 2) -> "UnitUpperMatrix":
        return cls(n, q)

    @classmethod
    def uniform(cls, n: int, rng: np.random.Generator, q: int = 2) -> "UnitUpperMatrix":
        m = cls(n, q)
        free = m.free_mask()
        m.data[free] = rng.integers(0, q, size=int(free.sum()), dtype=np.uint8)
        return m

    def copy(self) -> "UnitUpperMatrix":
        return UnitUpperMatrix(self.n, self.q, self.data.copy())


def _identity_data(n: int, indices) -> np.ndarray:
    d = np.zeros((n, len(indices)), dtype=np.uint8)
    for j, i in enumerate(indices):
        d[i - 1, j] = 1
    return d


def _arrays(omega):
    if isinstance(omega, noise.NoiseView):
        return omega.times, omega.event_rows, omega.marks
    return omega.times, omega.rows, omega.marks


# vector maps


def primal_map(omega, Y):
    """Apply the rings of ``omega`` in increasing time order to the column
    vector ``Y``: ``Y(x) <- Y(x) + c * Y(x + 1)``."""
    if len(Y) != omega.n:
        raise DimensionError(f"vector length {len(Y)} != n={omega.n}")
    _, rows, marks = _arrays(omega)
    if isinstance(Y, BitVec):
        if omega.q != 2:
            raise ParameterError("BitVec needs a q=2 field")
        y = Y.to_int()
        for x, m in zip(rows.tolist(), marks.tolist()):
            if m and (y >> x) & 1:
                y ^= 1 << (x - 1)
        return BitVec.from_int(y, Y.len)
    if Y.q != omega.q:
        raise ParameterError(f"F_{Y.q} vector with an F_{omega.q} field")
    q = Y.q
    y = Y.entries.tolist()
    for x, m in zip(rows.tolist(), marks.tolist()):
        if m and y[x]:
            y[x - 1] = (y[x - 1] + m * y[x]) % q
    return FqVec(Y.len, q, np.array(y))


def adjoint_map(omega, Z):
    """Right action on the row vector ``Z^T`` of the same product of
    elementary matrices: rings are applied latest first, each as the column
    operation ``Z(x + 1) <- Z(x + 1) + c * Z(x)``.

    Equivalently, the rings of :func:`noise.adjoint` in increasing order.
    """
    if len(Z) != omega.n:
        raise DimensionError(f"vector length {len(Z)} != n={omega.n}")
    _, rows, marks = _arrays(omega)
    rows, marks = rows[::-1].tolist(), marks[::-1].tolist()
    if isinstance(Z, BitVec):
        if omega.q != 2:
            raise ParameterError("BitVec needs a q=2 field")
        z = Z.to_int()
        for x, m in zip(rows, marks):
            if m and (z >> (x - 1)) & 1:
                z ^= 1 << x
        return BitVec.from_int(z, Z.len)
    if Z.q != omega.q:
        raise ParameterError(f"F_{Z.q} vector with an F_{omega.q} field")
    q = Z.q
    z = Z.entries.tolist()
    for x, m in zip(rows, marks):
        if m and z[x - 1]:
            z[x] = (z[x] + m * z[x - 1]) % q
    return FqVec(Z.len, q, np.array(z))


# block evolution


@numba.njit(cache=True, nogil=True)
def _apply_rings(data, rows, marks, q, lo, hi):
    k = data.shape[1]
    for e in range(lo, hi):
        c = marks[e]
        if c == 0:
            continue
        x = rows[e] - 1
        if q == 2:
            for j in range(k):
                data[x, j] ^= data[x + 1, j]
        else:
            for j in range(k):
                data[x, j] = (data[x, j] + c * data[x + 1, j]) % q


@dataclass(eq=False)
class Trajectory:
    """States of a block at increasing sample times; the last one is at ``t``."""

    times: np.ndarray
    states: list

    @property
    def final(self) -> ColumnBlock:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.states)


def evolve(M0: ColumnBlock, omega: noise.NoiseField, t: float, samples=None, t0: float = 0.0,
           check: bool = False) -> Trajectory:
    """Run the block through the rings of ``omega`` with ``t0 < s <= t``
    (``0 <= s`` when ``t0 == 0``).

    The returned trajectory holds the state at every requested sample time
    (state after all rings at or before it) followed by the state at ``t``.
    With ``check`` the unit-triangular shape is verified after every ring.
    """
    if t > omega.horizon:
        raise ParameterError(f"t={t} beyond horizon {omega.horizon}")
    if M0.n != omega.n:
        raise DimensionError(f"block n={M0.n} but field n={omega.n}")
    if M0.q != omega.q:
        raise ParameterError(f"F_{M0.q} block with an F_{omega.q} field")
    grid = [] if samples is None else sorted(float(s) for s in samples)
    if grid and (grid[0] < t0 or grid[-1] > t):
        raise ParameterError("sample times must lie in [t0, t]")
    grid.append(float(t))
    times, rows, marks = omega.times, omega.rows, omega.marks
    start = 0 if t0 == 0.0 else int(np.searchsorted(times, t0, side="right"))
    state = M0.copy()
    out = []
    pos = start
    for s in grid:
        end = int(np.searchsorted(times, s, side="right"))
        if check:
            for e in range(pos, end):
                _apply_rings(state.data, rows, marks, state.q, e, e + 1)
                state.check()
        else:
            _apply_rings(state.data, rows, marks, state.q, pos, end)
        pos = max(pos, end)
        out.append(state.copy())
    return Trajectory(np.array(grid), out)


def evolve_fq(M0: ColumnBlock, omega: noise.NoiseField, t: float, samples=None, t0: float = 0.0) -> Trajectory:
    """:func:`evolve` over F_q; the block and the field must agree on ``q``."""
    return evolve(M0, omega, t, samples=samples, t0=t0)


@numba.njit(cache=True, nogil=True)
def _discrete_steps(data, rng, nsteps, q):
    n = data.shape[0]
    k = data.shape[1]
    for _ in range(nsteps):
        x = rng.integers(0, n - 1)
        c = rng.integers(0, q)
        if c == 0:
            continue
        if q == 2:
            for j in range(k):
                data[x, j] ^= data[x + 1, j]
        else:
            for j in range(k):
                data[x, j] = (data[x, j] + c * data[x + 1, j]) % q


def evolve_discrete(M0: ColumnBlock, steps: int, seed: int, samples=None) -> Trajectory:
    """Discrete-time driver: each step picks a uniform row in ``[1, n-1]``
    and adds ``c`` times the next row, ``c`` uniform in F_q.

    ``N`` steps correspond to continuous time ``N / (n - 1)``.  Trajectory
    times are step counts.
    """
    grid = [] if samples is None else sorted(int(s) for s in samples)
    grid.append(int(steps))
    rng = noise.stream(seed, 1)
    state = M0.copy()
    done = 0
    out = []
    for s in grid:
        if s < done:
            raise ParameterError("sample steps must be non-decreasing and <= steps")
        _discrete_steps(state.data, rng, s - done, state.q)
        done = s
        out.append(state.copy())
    return Trajectory(np.array(grid, dtype=np.float64), out)


# column marginals and the East coupling


def column_noise(omega: noise.NoiseField, i: int) -> noise.NoiseField:
    """Rings that act on column ``i``, relabelled as East sites.

    Row ``x < i`` becomes site ``i - x``; the diagonal entry plays the frozen
    boundary site 0.
    """
    if not 2 <= i <= omega.n:
        raise ParameterError(f"column {i} has no free entries or is out of range")
    return omega.relabel(i, {x: i - x for x in range(1, i)})


def column_marginal(traj: Trajectory, i: int) -> east.EastPath:
    """Entries ``M(x, i)``, ``x < i``, over time in East site order."""
    j = traj.states[0].indices.index(i)
    q = traj.states[0].q
    vals = np.stack([s.data[: i - 1, j][::-1] for s in traj.states]) if i > 1 else np.zeros((len(traj), 0), np.uint8)
    return east.EastPath(traj.times.copy(), vals.astype(np.uint8), 1, q)


# linear decomposition of the target column


@dataclass(frozen=True, eq=False)
class DecompositionTerm:
    time: float
    alpha: int
    vector: object
    mark: int
    index: int


@dataclass(eq=False)
class ColumnDecomposition:
    """``M_target(t) = A_0 + sum_j alpha_j * mark_j * A_j``."""

    a0: object
    terms: list
    target: int
    row: int

    def reconstruct(self):
        acc = self.a0
        for term in self.terms:
            c = (term.alpha * term.mark) % (2 if isinstance(acc, BitVec) else acc.q)
            if c == 0:
                continue
            acc = acc + (term.vector if isinstance(acc, BitVec) else term.vector.scale(c))
        return acc


def last_one_pattern(row_entries: np.ndarray) -> bool:
    """Default selector: entries across the block read ``(0, ..., 0, 1)``."""
    return row_entries[-1] == 1 and not row_entries[:-1].any()


def decompose_column(omega: noise.NoiseField, i: int, window, block: ColumnBlock, t: float,
                     predicate: Callable[[np.ndarray], bool] = last_one_pattern) -> ColumnDecomposition:
    """Split the last tracked column at time ``t`` along the selected rings of
    row ``i`` inside ``window``.

    A ring of row ``i`` at time ``tau`` in ``[t1, t2]`` is selected when
    ``predicate`` holds for row ``i + 1`` of the block just before ``tau``.
    ``A_0`` is the target column evolved with the selected rings deleted,
    ``alpha_j = M(i + 1, target)(tau_j)`` and ``A_j`` is ``e_i`` pushed through
    the rings of rows ``[1, i - 1]`` in ``(tau_j, t]``.
    """
    t1, t2 = map(float, window)
    if not (0 <= t1 <= t2 <= omega.horizon):
        raise ParameterError(f"window {window} outside [0, {omega.horizon}]")
    if t < t2 or t > omega.horizon:
        raise ParameterError(f"t={t} must lie in [t2, horizon]")
    if not 1 <= i <= omega.n - 1:
        raise ParameterError(f"row {i} outside [1, {omega.n - 1}]")
    target = block.indices[-1]
    times, rows, marks = omega.times, omega.rows, omega.marks
    cand = np.nonzero((rows == i) & (times >= t1) & (times <= t2))[0]
    state = block.copy()
    pos = 0
    chosen, alphas = [], []
    for e in cand.tolist():
        _apply_rings(state.data, rows, marks, state.q, pos, e)
        pos = e
        below = state.data[i]
        if predicate(below):
            chosen.append(e)
            alphas.append(int(below[-1]))
    a0 = evolve(block.sub([target]), omega.without(chosen), t).final.column(target)
    if block.q == 2:
        unit = BitVec.unit(i, block.n)
    else:
        unit = FqVec.unit(i, block.n, block.q)
    terms = []
    for e, a in zip(chosen, alphas):
        if i > 1:
            vec = primal_map(noise.restrict(omega, (1, i - 1), (times[e], t)), unit)
        else:
            vec = unit
        terms.append(DecompositionTerm(float(times[e]), a, vec, int(marks[e]), e))
    return ColumnDecomposition(a0, terms, target, i)


# span certificate


ADJOINT_CAP = 20


def span_certificate(omega: noise.NoiseField, interval, ring_times: Sequence[float], t: float,
                     adjoint_side: bool = True):
    """Two independent answers to "do the vectors ``X_j`` span F_2^I?".

    ``X_j`` is ``e_b`` pushed through the rings of rows ``I = [a, b]`` in
    ``[t_j, t]`` and then restricted to ``I``.  The first answer is a rank
    computation.  The second runs, for every nonzero row vector ``Z``
    supported on ``I``, the East chain driven by the time-reversed field
    started from ``Z`` and asks whether coordinate ``b`` equals 1 at some
    adjoint time ``t - t_j``.
    """
    a, b = map(int, interval)
    if not 1 <= a <= b <= omega.n:
        raise ParameterError(f"interval {interval} outside [1, {omega.n}]")
    if omega.q != 2:
        raise ParameterError("span certificate is defined over F_2")
    tj = np.asarray(sorted(float(s) for s in ring_times))
    in_rows = (omega.rows >= a) & (omega.rows <= b)
    ring_set = set(omega.times[in_rows].tolist())
    for s in tj.tolist():
        if s > t or s not in ring_set:
            raise ParameterError(f"{s} is not a ring time of a row in [{a}, {b}] before t={t}")
    dim = b - a + 1
    if adjoint_side and dim > ADJOINT_CAP:
        raise SizeError(f"|I|={dim} > {ADJOINT_CAP}: adjoint side needs 2^|I| starts")
    if tj.size == 0:
        return False, (False if adjoint_side else None)

    unit = BitVec.unit(b, omega.n)
    xs = [primal_map(noise.restrict(omega, (a, b), (s, t)), unit).restrict(a, b) for s in tj.tolist()]
    direct = rank(xs, dim) == dim
    if not adjoint_side:
        return direct, None

    # adjoint side: coordinate a is frozen (row a - 1 is outside I), coordinates
    # a+1..b are East sites 1..b-a; rings of row b only touch coordinate b+1
    star = noise.adjoint(omega, t)
    if dim == 1:
        return direct, True
    sites = star.relabel(dim, {x: x - a + 1 for x in range(a, b)})
    zs = np.arange(1, 1 << dim, dtype=np.int64)
    bits = ((zs[:, None] >> np.arange(dim)[None, :]) & 1).astype(np.uint8)
    hits = np.zeros(zs.size, dtype=bool)
    path = east.run_batch(bits[:, 1:], bits[:, 0], sites, t - tj[::-1])
    for v in path:
        hits |= v[:, -1] == 1
    return direct, bool(hits.all())


# batch sampler used as an independent Monte Carlo oracle


@numba.njit(cache=True, nogil=True)
def _gillespie_batch(init, rng, times, q, out):
    runs = out.shape[0]
    n = init.shape[0]
    k = init.shape[1]
    data = np.empty_like(init)
    rate = n - 1
    for r in range(runs):
        data[:, :] = init
        s = 0.0
        s += rng.exponential() / rate
        for g in range(times.size):
            while s <= times[g]:
                x = rng.integers(0, n - 1)
                c = rng.integers(0, q)
                if c != 0:
                    for j in range(k):
                        data[x, j] = (data[x, j] + c * data[x + 1, j]) % q
                s += rng.exponential() / rate
            out[r, g, :, :] = data


def sample_states(M0: ColumnBlock, times: Sequence[float], runs: int, seed: int) -> np.ndarray:
    """Independent Gillespie runs of the block (total ring rate ``n - 1``).

    Returns ``(runs, len(times), n, k)`` uint8 states; this path shares no
    code with :func:`evolve` and serves as its statistical oracle.
    """
    grid = np.asarray(sorted(float(s) for s in times))
    out = np.empty((runs, grid.size, M0.n, M0.k), dtype=np.uint8)
    _gillespie_batch(M0.data, noise.stream(seed, 2), grid, M0.q, out)
    return out


def duality_check(n_max: int, cases: int, seed: int, qs: Sequence[int] = (2, 3, 5), horizon: float = 5.0) -> list:
    """Random instances of ``Z^T Phi(Y) = Phi*(Z^T) Y``; returns the failures.

    Each instance draws ``n`` in ``[2, n_max]``, ``q`` from ``qs``, a field on
    ``[0, T]`` with ``T`` uniform below ``horizon``, and uniform ``Y``, ``Z``.
    """
    from .gf2 import FqVec

    rng = noise.stream(seed, 7)
    bad = []
    for c in range(cases):
        n = int(rng.integers(2, n_max + 1))
        q = int(qs[int(rng.integers(0, len(qs)))])
        T = float(rng.uniform(0, horizon))
        k = int(rng.poisson(T * (n - 1)))
        # same law as independent row clocks, drawn from one stream for speed
        omega = noise.NoiseField(n, T, q, None, rng.uniform(0, T, size=k), rng.integers(1, n, size=k),
                                 rng.integers(0, q, size=k))
        y, z = rng.integers(0, q, size=n), rng.integers(0, q, size=n)
        if q == 2:
            Y, Z = BitVec.from_bits(y), BitVec.from_bits(z)
        else:
            Y, Z = FqVec(n, q, y), FqVec(n, q, z)
        lhs = Z.dot(primal_map(omega, Y))
        rhs = adjoint_map(omega, Z).dot(Y)
        if lhs != rhs:
            bad.append({"case": c, "n": n, "q": q, "lhs": int(lhs), "rhs": int(rhs)})
    return bad
