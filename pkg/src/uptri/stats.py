"""Pattern statistics, concentration checks, front-based TV proxies and the
large rank experiment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numba
import numpy as np

from . import east, gf2, noise, walk
from .errors import ParameterError
from .parallel import map_seeds

__all__ = [
    "PatternCounts",
    "pattern_counts",
    "GoodRowReport",
    "good_rows",
    "TimeAverageResult",
    "time_average_check",
    "ChernoffCheck",
    "chernoff_ensemble",
    "TailEstimate",
    "front_tail_estimate",
    "ProxyProfile",
    "tv_proxy_profile",
    "crossing_time",
    "RankExperiment",
    "rank_experiment",
    "binomial_chisquare",
]


# pattern counts


@dataclass(frozen=True)
class PatternCounts:
    """Row tallies of the last two entries on rows whose first ``k - 2``
    entries vanish: ``N`` is (0,1), ``N1`` is (1,0), ``N2`` is (0,0) and
    ``N3`` is (1,1).  For ``k = 2`` the four add up to the number of rows."""

    N: int
    N1: int
    N2: int
    N3: int
    k: int
    rows: int

    def as_tuple(self) -> tuple:
        return (self.N, self.N1, self.N2, self.N3)


def _pattern_matrix(state) -> np.ndarray:
    if isinstance(state, walk.ColumnBlock):
        # rows at or below the last column's diagonal are structural
        last = state.indices[-1]
        return (state.data[: last - 1] != 0).astype(np.uint8)
    vs = list(state)
    cols = [v.bits() if isinstance(v, gf2.BitVec) else (np.asarray(v) != 0).astype(np.uint8) for v in vs]
    if len({c.size for c in cols}) > 1:
        raise ParameterError("pattern vectors differ in length")
    return np.stack(cols, axis=1)


def pattern_counts(state) -> PatternCounts:
    """Tally a ColumnBlock over rows ``[1, i_k - 1]`` or a sequence of
    ``k`` vectors over all their coordinates."""
    X = _pattern_matrix(state)
    k = X.shape[1]
    if k < 2:
        raise ParameterError("at least two columns are needed")
    head = ~X[:, : k - 2].any(axis=1)
    a, b = X[:, k - 2].astype(bool), X[:, k - 1].astype(bool)
    return PatternCounts(
        N=int((head & ~a & b).sum()),
        N1=int((head & a & ~b).sum()),
        N2=int((head & ~a & ~b).sum()),
        N3=int((head & a & b).sum()),
        k=k,
        rows=X.shape[0],
    )


def binomial_chisquare(samples: np.ndarray, n: int, p: float, min_expected: float = 5.0) -> tuple:
    """Chi-square goodness of fit of integer samples to Binomial(n, p).

    Cells are merged from both tails until every cell expects at least
    ``min_expected`` counts.  Returns ``(statistic, dof, p_value)``.
    """
    from scipy import stats as st

    samples = np.asarray(samples, dtype=np.int64)
    N = samples.size
    pmf = st.binom.pmf(np.arange(n + 1), n, p)
    obs = np.bincount(samples, minlength=n + 1).astype(np.float64)
    exp = pmf * N
    edges = []
    acc = 0.0
    for v in range(n + 1):
        acc += exp[v]
        if acc >= min_expected:
            edges.append(v)
            acc = 0.0
    if not edges:
        raise ParameterError("too few samples for a chi-square test")
    edges[-1] = n  # fold the thin upper tail into the last cell
    o, e, lo = [], [], 0
    for hi in edges:
        o.append(obs[lo : hi + 1].sum())
        e.append(exp[lo : hi + 1].sum())
        lo = hi + 1
    o, e = np.array(o), np.array(e)
    stat = float(((o - e) ** 2 / e).sum())
    dof = len(o) - 1
    return stat, dof, float(st.chi2.sf(stat, dof))


# good rows


@dataclass(frozen=True, eq=False)
class GoodRowReport:
    window: tuple
    k: int
    integrals: np.ndarray  # index x - 1 for rows 1 .. i_k - 1

    @property
    def threshold(self) -> float:
        return (self.window[1] - self.window[0]) / 2 ** (self.k + 1)

    @property
    def good(self) -> np.ndarray:
        return self.integrals >= self.threshold

    def good_rows(self) -> list:
        return (np.nonzero(self.good)[0] + 1).tolist()


@numba.njit(cache=True, nogil=True)
def _matches(data, x):
    k = data.shape[1]
    for j in range(k - 1):
        if data[x, j] != 0:
            return False
    return data[x, k - 1] == 1


@numba.njit(cache=True, nogil=True)
def _occupation(data, times, rows, marks, q, t1, t2, nrows, out):
    k = data.shape[1]
    match = np.zeros(nrows, dtype=np.bool_)
    since = np.full(nrows, t1)
    for x in range(nrows):
        match[x] = _matches(data, x)
    for e in range(times.size):
        t = times[e]
        if t <= t1:
            continue
        if t > t2:
            break
        x = rows[e] - 1
        c = marks[e]
        if c == 0:
            continue
        for j in range(k):
            data[x, j] = (data[x, j] + c * data[x + 1, j]) % q
        if x < nrows:
            now = _matches(data, x)
            if now != match[x]:
                if match[x]:
                    out[x] += t - since[x]
                else:
                    since[x] = t
                match[x] = now
    for x in range(nrows):
        if match[x]:
            out[x] += t2 - since[x]


def good_rows(block: walk.ColumnBlock, omega: noise.NoiseField, window, t0: float = 0.0) -> GoodRowReport:
    """Exact occupation time of the (0,...,0,1) row pattern over ``window``.

    ``block`` is the state at time ``t0 <= t1``; rings in ``(t0, t1]`` bring
    it to the window start and rings in ``(t1, t2]`` are integrated exactly.
    """
    t1, t2 = float(window[0]), float(window[1])
    if not t0 <= t1 <= t2 <= omega.horizon:
        raise ParameterError("need t0 <= t1 <= t2 <= horizon")
    if block.k < 1:
        raise ParameterError("empty block")
    state = block.copy() if t1 == t0 else walk.evolve(block, omega, t1, t0=t0).final
    nrows = block.indices[-1] - 1
    out = np.zeros(nrows)
    _occupation(state.data, omega.times, omega.rows, omega.marks, block.q, t1, t2, nrows, out)
    return GoodRowReport((t1, t2), block.k, out)


# concentration of time averages


@dataclass(frozen=True)
class TimeAverageResult:
    deviation: float
    bound: float
    measure: float
    empty: bool = False

    def exceeds(self, delta: float) -> bool:
        return (not self.empty) and self.deviation >= delta


@numba.njit(cache=True, nogil=True)
def _measure_upto(t, s, e):
    # |A ∩ [0, t]| for A the union of [s_i, e_i]
    acc = 0.0
    for i in range(s.size):
        if t > s[i]:
            acc += min(t, e[i]) - s[i]
    return acc


@numba.njit(cache=True, nogil=True)
def _east_integral(vals, boundary, times, sites, marks, q, fvals, s, e, horizon):
    L = vals.size
    code = 0
    for y in range(L):
        if vals[y] != 0:
            code |= 1 << y
    acc = 0.0
    last = 0.0
    for k in range(times.size):
        t = times[k]
        if t > horizon:
            break
        y = sites[k] - 1
        left = boundary if y == 0 else vals[y - 1]
        if left == 0 or marks[k] == 0:
            continue
        new = (vals[y] + marks[k] * left) % q
        if (new != 0) == (vals[y] != 0):
            vals[y] = new
            continue
        acc += fvals[code] * (_measure_upto(t, s, e) - _measure_upto(last, s, e))
        last = t
        vals[y] = new
        code ^= 1 << y
    acc += fvals[code] * (_measure_upto(horizon, s, e) - _measure_upto(last, s, e))
    return acc


def _intervals(A) -> tuple:
    arr = np.asarray(sorted((float(a), float(b)) for a, b in A), dtype=np.float64).reshape(-1, 2)
    if np.any(arr[:, 1] < arr[:, 0]) or np.any(arr[1:, 0] < arr[:-1, 1]):
        raise ParameterError("A must be a union of disjoint intervals")
    return arr[:, 0].copy(), arr[:, 1].copy()


def _f_table(f, L: int) -> np.ndarray:
    if callable(f):
        codes = np.arange(1 << L)
        bits = (codes[:, None] >> np.arange(L)) & 1
        return np.array([float(f(b)) for b in bits])
    table = np.asarray(f, dtype=np.float64)
    if table.size != 1 << L:
        raise ParameterError(f"f needs {1 << L} values")
    return table


def time_average_check(eta0: east.EastState, omega: noise.NoiseField, f, A, delta: float,
                       gap: Optional[float] = None, b: float = 1.0) -> TimeAverageResult:
    """``|∫_A f(η(s)) ds| / |A|`` along an East run and the large-deviation bound
    ``(2/π_min) exp(-γ δ² |A| / (1 + 2b)²)`` for the uniform measure.

    ``f`` is a function of the occupation vector (or a table over state
    codes, site ``y`` at bit ``y - 1``).  The gap defaults to the exact one.
    """
    from .spectral import StateSpace, build_generator, spectral_gap

    L = eta0.L
    if omega.n - 1 != L:
        raise ParameterError(f"field has {omega.n - 1} rows for {L} sites")
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    table = _f_table(f, L)
    if np.abs(table).max() > 1:
        raise ParameterError("|f| must be bounded by 1")
    s, e = _intervals(A)
    measure = float((e - s).sum())
    if gap is None:
        gap = spectral_gap(build_generator(StateSpace.east(L)))
    bound = 2 * 2.0**L * math.exp(-gap * delta**2 * measure / (1 + 2 * b) ** 2)
    if measure == 0:
        return TimeAverageResult(float("nan"), bound, 0.0, empty=True)
    horizon = float(e.max())
    if horizon > omega.horizon:
        raise ParameterError("A extends beyond the field horizon")
    integral = _east_integral(np.array(eta0.values, dtype=np.int64), int(eta0.boundary), omega.times,
                              omega.rows, omega.marks.astype(np.int64), eta0.q, table, s, e, horizon)
    return TimeAverageResult(abs(integral) / measure, bound, measure)


@dataclass(frozen=True)
class ChernoffCheck:
    runs: int
    exceedances: int
    bound: float
    gap: float
    delta: float
    measure: float

    @property
    def frequency(self) -> float:
        return self.exceedances / self.runs

    @property
    def consistent(self) -> bool:
        return self.frequency <= self.bound


def chernoff_ensemble(m: int = 3, runs: int = 1000, A=None, delta: float = 0.2, seed: int = 0) -> ChernoffCheck:
    """Ensemble check of the time-average bound on East ``[m]`` with
    ``f = 1(η_m = 1) - 1/2`` (so ``b = 1/2``) from uniform starts.

    The default ``A`` is twenty unit-spaced blocks of length 10, ``|A| = 200``.
    """
    from .spectral import StateSpace, build_generator, spectral_gap

    if A is None:
        A = [(20.0 * j, 20.0 * j + 10.0) for j in range(20)]
    gap = spectral_gap(build_generator(StateSpace.east(m)))
    table = np.array([((c >> (m - 1)) & 1) - 0.5 for c in range(1 << m)])
    horizon = max(b for _, b in A)
    rng = noise.stream(seed, 5)
    hits = 0
    res = None
    for r in range(runs):
        eta0 = east.EastState(rng.integers(0, 2, size=m).astype(np.uint8))
        omega = noise.sample(m + 1, horizon, seed=seed * runs + r)
        res = time_average_check(eta0, omega, table, A, delta, gap=gap, b=0.5)
        hits += res.exceeds(delta)
    return ChernoffCheck(runs, hits, res.bound, gap, delta, res.measure)


# front tails and the TV proxy


@dataclass(frozen=True, eq=False)
class TailEstimate:
    t: float
    velocity: float
    a: np.ndarray
    prob: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    r2: float
    valid: np.ndarray
    wide_ci: bool
    meta: dict = field(default_factory=dict)


def _position_at(traj: east.FrontTrajectory, t: float) -> int:
    dt = traj.meta.get("sample_dt", 1.0)
    g = int(round(t / dt))
    if abs(g * dt - t) > 1e-9 * max(1.0, t):
        raise ParameterError(f"t={t} is not on the sample grid")
    if g >= traj.positions.size:
        if traj.truncated:
            return int(traj.meta["L"])
        raise ParameterError(f"t={t} beyond the trajectory")
    return int(traj.positions[g])


def front_tail_estimate(trajs: Sequence[east.FrontTrajectory], t: float, a_grid: Sequence[float],
                        v: Optional[float] = None, min_count: int = 10) -> TailEstimate:
    """Empirical ``P(|X(t) - v t| >= a)`` and a least-squares line of
    ``-log P`` against ``(a²/t)^{1/3}`` over grid points with at least
    ``min_count`` exceedances and ``a >= sqrt(t)``."""
    if v is None:
        v = east.estimate_velocity(trajs).mean
    X = np.array([_position_at(tr, t) for tr in trajs], dtype=np.float64)
    dev = np.abs(X - v * t)
    a = np.asarray(a_grid, dtype=np.float64)
    counts = np.array([(dev >= ai).sum() for ai in a])
    prob = counts / X.size
    valid = (counts >= min_count) & (a >= math.sqrt(t)) & (prob < 1)
    slope = intercept = r2 = float("nan")
    if valid.sum() >= 2:
        x = (a[valid] ** 2 / t) ** (1 / 3)
        y = -np.log(prob[valid])
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        ss = ((y - y.mean()) ** 2).sum()
        r2 = float(1 - (resid**2).sum() / ss) if ss > 0 else 1.0
    meta = {"runs": int(X.size), "regime_a": math.sqrt(t) * math.log(t) ** 1.5 if t > 1 else 0.0}
    return TailEstimate(float(t), float(v), a, prob, counts, float(slope), float(intercept), float(r2), valid,
                        bool((counts[a > 0] < min_count).any()), meta)


@dataclass(frozen=True, eq=False)
class ProxyProfile:
    n: int
    times: np.ndarray
    prob: np.ndarray
    runs: int
    meta: dict = field(default_factory=dict)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(self.prob * (1 - self.prob) / self.runs)


def tv_proxy_profile(n: int, times: Sequence[float], runs: int, seed: int = 0, L: Optional[int] = None,
                     sample_dt: float = 1.0) -> ProxyProfile:
    """``P(X(t) < n)`` for the East front started from the empty
    configuration, over seeds ``seed .. seed + runs - 1``."""
    if n < 1 or runs < 1:
        raise ParameterError("need n >= 1 and runs >= 1")
    grid = np.asarray(times, dtype=np.float64)
    if grid.size == 0 or grid.min() < 0:
        raise ParameterError("times must be non-negative")
    L = L or 2 * n + 100
    T = float(grid.max())

    def one(s):
        tr = east.front_trajectory(L, T, s, sample_dt)
        return np.array([_position_at(tr, t) < n for t in grid])

    below = np.sum(map_seeds(one, range(seed, seed + runs)), axis=0)
    return ProxyProfile(n, grid, below / runs, runs, {"L": L, "seed": seed, "sample_dt": sample_dt})


def crossing_time(profile: ProxyProfile, level: float) -> float:
    """First grid time where the profile drops to ``level``, linearly
    interpolated from the previous grid point."""
    p, t = profile.prob, profile.times
    idx = np.nonzero(p <= level)[0]
    if idx.size == 0:
        return float("nan")
    j = idx[0]
    if j == 0:
        return float(t[0])
    p0, p1 = p[j - 1], p[j]
    return float(t[j - 1] + (p0 - level) / (p0 - p1) * (t[j] - t[j - 1]))


# rank experiment


@dataclass(frozen=True, eq=False)
class RankExperiment:
    n: int
    rows: tuple
    cols: tuple
    schedule: tuple
    seeds: tuple
    ranks: np.ndarray  # (seeds, schedule)
    driver: str = "discrete"

    @property
    def min_dim(self) -> int:
        return min(self.rows[1] - self.rows[0] + 1, self.cols[1] - self.cols[0] + 1)

    @property
    def full_rank_probability(self) -> float:
        """Equilibrium probability of rank ``min_dim`` for i.i.d. fair bits."""
        return gf2.full_rank_probability(self.rows[1] - self.rows[0] + 1, self.cols[1] - self.cols[0] + 1)

    def to_rows(self) -> list:
        return [(s, int(step), int(self.ranks[a, b])) for a, s in enumerate(self.seeds)
                for b, step in enumerate(self.schedule)]


@numba.njit(cache=True, nogil=True)
def _row_steps(state, rng, nsteps):
    n, nw = state.shape
    for _ in range(nsteps):
        x = rng.integers(0, n - 1)
        if rng.integers(0, 2) == 1:
            for w in range(nw):
                state[x, w] ^= state[x + 1, w]


RANK_STREAM = 6


def _rank_run(n, rows, cols, schedule, seed, driver):
    c0, c1 = cols
    width = c1 - c0 + 1
    nw = (width + 63) // 64
    state = np.zeros((n, nw), dtype=np.uint64)
    for x in range(c0, c1 + 1):
        b = x - c0
        state[x - 1, b // 64] |= np.uint64(1) << np.uint64(b % 64)
    rng = noise.stream(seed, RANK_STREAM)
    done = 0
    out = []
    for target in schedule:
        todo = target - done
        if driver == "continuous":
            # ring count of time todo/(n-1) at total rate n-1
            todo = int(rng.poisson(todo)) if todo > 0 else 0
        _row_steps(state, rng, todo)
        done = target
        out.append(int(gf2.rank_packed(state[rows[0] - 1 : rows[1]])))
    return out


def rank_experiment(n: int = 1000, rows=(1, 333), cols=(747, 1000),
                    schedule: Sequence[int] = (0, 6_666_667, 40_000_000), seeds: Sequence[int] = range(5),
                    driver: str = "discrete") -> RankExperiment:
    """GF(2) rank of a rectangular block of the walk started at the identity.

    Only the tracked columns are simulated, as packed rows: a row addition
    restricted to a column set is closed on it.  ``driver="continuous"``
    replaces each schedule gap of ``N`` steps by a Poisson(N) number of
    rings, the continuous-time walk run for ``N / (n - 1)``.
    """
    if driver not in ("discrete", "continuous"):
        raise ParameterError(f"unknown driver {driver}")
    if not (1 <= rows[0] <= rows[1] <= n and 1 <= cols[0] <= cols[1] <= n):
        raise ParameterError("block outside the matrix")
    sched = tuple(int(s) for s in schedule)
    if any(b < a for a, b in zip(sched, sched[1:])) or (sched and sched[0] < 0):
        raise ParameterError("schedule must be non-decreasing and non-negative")
    seeds = tuple(int(s) for s in seeds)
    ranks = map_seeds(lambda s: _rank_run(n, tuple(rows), tuple(cols), sched, s, driver), seeds)
    return RankExperiment(n, tuple(rows), tuple(cols), sched, seeds, np.array(ranks, dtype=np.int64).reshape(len(seeds), len(sched)), driver)
