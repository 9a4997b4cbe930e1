"""East process with facilitating ones, its front, and persistence times.

Sites are ``1..L``; site 0 is a frozen boundary.  Under a noise field a ring
``(s, y, c)`` is legal when site ``y - 1`` is nonzero, and then
``eta(y) <- eta(y) + c * eta(y - 1)`` in F_q.  For q = 2 this is "add a fair
bit", equal in law to resampling from Bernoulli(1/2); for prime q the nonzero
pattern is an East chain at density (q-1)/q.

The standalone simulators (front, persistence) do not use a field: they run a
Gillespie loop over the currently facilitated sites only, seeded from a
Philox stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from . import noise
from .errors import DimensionError, ParameterError

__all__ = [
    "EastState",
    "EastPath",
    "FrontTrajectory",
    "VelocityEstimate",
    "front",
    "evolve",
    "trajectory",
    "run_batch",
    "front_trajectory",
    "front_ensemble",
    "velocity",
    "estimate_velocity",
    "persistence_sample",
    "fit_decay_rate",
    "front_frame_sample",
]


@dataclass(eq=False)
class EastState:
    values: np.ndarray
    boundary: int = 1
    q: int = 2

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint8).copy()
        if self.values.ndim != 1:
            raise DimensionError("East configuration must be 1-d")
        if self.values.size and self.values.max() >= self.q:
            raise ParameterError("value outside [0, q)")

    @classmethod
    def zeros(cls, L: int, boundary: int = 1, q: int = 2) -> "EastState":
        return cls(np.zeros(L, dtype=np.uint8), boundary, q)

    @property
    def L(self) -> int:
        return int(self.values.size)

    @property
    def bits(self) -> np.ndarray:
        return (self.values != 0).astype(np.uint8)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EastState):
            return NotImplemented
        return self.boundary == other.boundary and self.q == other.q and bool(np.array_equal(self.values, other.values))


@dataclass(eq=False)
class EastPath:
    """Configurations (rows of ``values``) at increasing ``times``."""

    times: np.ndarray
    values: np.ndarray
    boundary: int = 1
    q: int = 2

    @property
    def bits(self) -> np.ndarray:
        return (self.values != 0).astype(np.uint8)

    def fronts(self) -> np.ndarray:
        b = self.bits
        if b.shape[1] == 0:
            return np.zeros(b.shape[0], dtype=np.int64)
        last = b.shape[1] - np.argmax(b[:, ::-1], axis=1)
        return np.where(b.any(axis=1), last, 0)

    def state(self, k: int) -> EastState:
        return EastState(self.values[k], self.boundary, self.q)


def front(eta) -> int:
    """Largest site holding a nonzero value, 0 when there is none."""
    v = eta.values if isinstance(eta, EastState) else np.asarray(eta)
    nz = np.flatnonzero(v)
    return int(nz[-1]) + 1 if nz.size else 0


# shared-noise dynamics


@numba.njit(cache=True, nogil=True)
def _east_rings(vals, sites, marks, q, lo, hi):
    B = vals.shape[0]
    for e in range(lo, hi):
        c = marks[e]
        if c == 0:
            continue
        y = sites[e]
        for b in range(B):
            left = vals[b, y - 1]
            if left != 0:
                if q == 2:
                    vals[b, y] ^= 1
                else:
                    vals[b, y] = (vals[b, y] + c * left) % q


def run_batch(values: np.ndarray, boundary, omega: noise.NoiseField, sample_times: Sequence[float]) -> list:
    """Evolve a batch of configurations ``(B, L)`` under the same field.

    Field rows are sites; returns the ``(B, L)`` batch after all rings at or
    before each (non-decreasing) sample time.
    """
    values = np.atleast_2d(np.asarray(values, dtype=np.uint8))
    B, L = values.shape
    if omega.n - 1 != L:
        raise DimensionError(f"field has {omega.n - 1} rows for {L} sites")
    vals = np.empty((B, L + 1), dtype=np.uint8)
    vals[:, 0] = boundary
    vals[:, 1:] = values
    times, sites, marks = omega.times, omega.rows, omega.marks
    out = []
    pos = 0
    for s in sample_times:
        end = int(np.searchsorted(times, s, side="right"))
        if end > pos:
            _east_rings(vals, sites, marks, omega.q, pos, end)
            pos = end
        out.append(vals[:, 1:].copy())
    return out


def _check_field(eta: EastState, omega: noise.NoiseField):
    if eta.q != omega.q:
        raise ParameterError(f"F_{eta.q} state with an F_{omega.q} field")


def evolve(eta0: EastState, omega: noise.NoiseField, t: float, density: Optional[float] = None) -> EastState:
    """State at time ``t`` under the rings of ``omega`` (rows are sites)."""
    _check_field(eta0, omega)
    if density is not None and not np.isclose(density, (omega.q - 1) / omega.q):
        raise ParameterError(f"density {density} does not match F_{omega.q}")
    if t > omega.horizon:
        raise ParameterError(f"t={t} beyond horizon {omega.horizon}")
    (v,) = run_batch(eta0.values, eta0.boundary, omega, [t])
    return EastState(v[0], eta0.boundary, eta0.q)


def trajectory(eta0: EastState, omega: noise.NoiseField, times: Sequence[float]) -> EastPath:
    _check_field(eta0, omega)
    grid = np.asarray(times, dtype=np.float64)
    vs = run_batch(eta0.values, eta0.boundary, omega, grid)
    return EastPath(grid, np.stack([v[0] for v in vs]) if vs else np.zeros((0, eta0.L), np.uint8),
                    eta0.boundary, eta0.q)


# standalone front simulator


@numba.njit(cache=True, nogil=True)
def _front_kernel(rng, L, dt, out_pos, acc_from, acc):
    """Density-1/2 East from the empty configuration, boundary 1.

    Flips happen at rate 1/2 at each facilitated site (left neighbour 1);
    only sites 1..front+1 can be facilitated.  Returns (samples written,
    number of frame snapshots accumulated).
    """
    eta = np.zeros(L + 1, dtype=np.uint8)
    eta[0] = 1
    where = np.full(L + 2, -1, dtype=np.int64)
    fac = np.empty(L + 1, dtype=np.int64)
    fac[0] = 1
    where[1] = 0
    m = 1
    X = 0
    t = 0.0
    nsamp = out_pos.size
    W = acc.size
    g = 0
    snaps = 0
    while True:
        t += rng.exponential() / (0.5 * m)
        while g < nsamp and g * dt < t:
            out_pos[g] = X
            if W > 0 and g * dt >= acc_from and X > W:
                for d in range(1, W + 1):
                    acc[d - 1] += eta[X - d]
                snaps += 1
            g += 1
        if g >= nsamp:
            return g, snaps
        y = fac[rng.integers(0, m)]
        eta[y] ^= 1
        if eta[y] == 1:
            if y > X:
                X = y
            if y < L:
                where[y + 1] = m
                fac[m] = y + 1
                m += 1
        else:
            if y == X:
                X -= 1
                while X > 0 and eta[X] == 0:
                    X -= 1
            if y < L:
                k = where[y + 1]
                last = fac[m - 1]
                fac[k] = last
                where[last] = k
                where[y + 1] = -1
                m -= 1
        if X >= L:
            if g < nsamp:
                out_pos[g] = X
                g += 1
            return g, snaps


@dataclass(eq=False)
class FrontTrajectory:
    times: np.ndarray
    positions: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def truncated(self) -> bool:
        return bool(self.meta.get("truncated", False))


FRONT_STREAM = 3


def front_trajectory(L: int, T: float, seed: int, sample_dt: float = 1.0) -> FrontTrajectory:
    """Front position ``X(t)`` sampled every ``sample_dt`` on ``[0, T]``.

    If the front reaches ``L`` first, the trajectory stops there and
    ``meta["truncated"]`` is set.
    """
    if L <= 0 or T < 0 or sample_dt <= 0:
        raise ParameterError("need L > 0, T >= 0, sample_dt > 0")
    nsamp = int(np.floor(T / sample_dt + 1e-9)) + 1
    pos = np.zeros(nsamp, dtype=np.int64)
    g, _ = _front_kernel(noise.stream(seed, FRONT_STREAM), L, float(sample_dt), pos, 0.0, np.zeros(0, np.int64))
    times = np.arange(g) * sample_dt
    meta = {"L": L, "T": T, "seed": seed, "density": 0.5, "sample_dt": sample_dt, "truncated": g < nsamp}
    return FrontTrajectory(times, pos[:g].copy(), meta)


def front_ensemble(L: int, T: float, seeds: Sequence[int], sample_dt: float = 1.0) -> list:
    from .parallel import map_seeds

    return map_seeds(lambda s: front_trajectory(L, T, s, sample_dt), seeds)


def velocity(traj: FrontTrajectory) -> float:
    """Least-squares slope of the front over the second half of the run."""
    T = traj.times[-1]
    sel = traj.times >= T / 2
    t, x = traj.times[sel], traj.positions[sel].astype(np.float64)
    if t.size < 2:
        raise ParameterError("too few samples in [T/2, T]")
    tc = t - t.mean()
    return float(np.dot(tc, x - x.mean()) / np.dot(tc, tc))


@dataclass(frozen=True)
class VelocityEstimate:
    mean: float
    sd: float
    ci: tuple
    slopes: tuple

    @property
    def ci_width(self) -> float:
        return self.ci[1] - self.ci[0]


def estimate_velocity(trajs: Sequence[FrontTrajectory], level: float = 0.95) -> VelocityEstimate:
    from scipy import stats as st

    if any(tr.truncated for tr in trajs):
        raise ParameterError("a trajectory hit the right edge; increase L")
    v = np.array([velocity(tr) for tr in trajs])
    sd = float(v.std(ddof=1)) if v.size > 1 else float("nan")
    half = st.t.ppf(0.5 + level / 2, v.size - 1) * sd / np.sqrt(v.size)
    return VelocityEstimate(float(v.mean()), sd, (float(v.mean() - half), float(v.mean() + half)), tuple(v.tolist()))


# front frame


@dataclass(frozen=True, eq=False)
class FrameMarginals:
    """Frequency of a 1 at distance ``d = 1..W`` behind the front."""

    freq: np.ndarray
    samples: int
    meta: dict

    def to_dict(self) -> dict:
        return {"distance": list(range(1, self.freq.size + 1)), "frequency": self.freq.tolist(),
                "samples": self.samples, **self.meta}


def front_frame_sample(T_burn: float, T_run: float, seed: int, W: int, sample_dt: float = 1.0,
                       L: Optional[int] = None) -> FrameMarginals:
    """Configuration seen from the front, averaged over time after burn-in."""
    T = T_burn + T_run
    if L is None:
        L = int(0.3 * T) + 4 * W + 100
    if W > L // 2:
        raise ParameterError(f"W={W} > L/2")
    nsamp = int(np.floor(T / sample_dt + 1e-9)) + 1
    pos = np.zeros(nsamp, dtype=np.int64)
    acc = np.zeros(W, dtype=np.int64)
    g, snaps = _front_kernel(noise.stream(seed, FRONT_STREAM), L, float(sample_dt), pos, float(T_burn), acc)
    freq = acc / snaps if snaps else np.zeros(W)
    meta = {"T_burn": T_burn, "T_run": T_run, "seed": seed, "W": W, "L": L, "sample_dt": sample_dt,
            "truncated": g < nsamp}
    return FrameMarginals(freq, int(snaps), meta)


# persistence


@numba.njit(cache=True, nogil=True)
def _persistence_kernel(rng, n, tmax, out):
    eta = np.zeros(n, dtype=np.uint8)
    for r in range(out.size):
        eta[0] = 1
        for y in range(1, n):
            eta[y] = rng.integers(0, 2)
        t = 0.0
        tau = np.inf
        while True:
            t += rng.exponential() / n
            if t > tmax:
                break
            y = rng.integers(1, n + 1)
            if y == n:
                if eta[n - 1] == 1:
                    tau = t
                    break
            elif eta[y - 1] == 1:
                eta[y] ^= rng.integers(0, 2)
        out[r] = tau


PERSISTENCE_STREAM = 4


def persistence_sample(n: int, trials: int, seed: int, timeout: float = 1e4) -> np.ndarray:
    """First legal ring time at site ``n`` from the uniform measure on {0,1}^n.

    Trials exceeding ``timeout`` come back as ``inf``.  The value of site
    ``n`` never influences legality, so only sites ``1..n-1`` are simulated.
    """
    if n < 1:
        raise ParameterError("n >= 1 required")
    out = np.empty(trials, dtype=np.float64)
    _persistence_kernel(noise.stream(seed, PERSISTENCE_STREAM), n, float(timeout), out)
    return out


def fit_decay_rate(taus: np.ndarray, quantile: float = 0.9) -> float:
    """Exponential MLE rate of the excess over the ``quantile`` cut.

    The survival curve is a mixture of decaying modes; only the slowest one
    should be left past the cut.  At the median the faster modes still bias
    the rate by tens of percent once n >= 4, at the 0.9 quantile by under 1%.
    """
    taus = np.asarray(taus, dtype=np.float64)
    taus = taus[np.isfinite(taus)]
    if not 0 <= quantile < 1:
        raise ParameterError("quantile must lie in [0, 1)")
    m = np.quantile(taus, quantile)
    excess = taus[taus > m] - m
    return float(excess.size / excess.sum())
