"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line with the measured quantities; the lines
are printed together at the end of the pytest run.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats as st

from conftest import ACCEPTANCE_LINES
from uptri import east, noise, spectral, stats, walk
from uptri.gf2 import BitVec

V_SEEDS = range(30)
V_L, V_T = 2000, 9000.0


def record(num, title, ok, detail):
    key = str(num).rjust(4)
    line = f"[{'PASS' if ok else 'FAIL'}] {key}  {title}: {detail}"
    ACCEPTANCE_LINES.append((key, line))
    print(line)
    return ok


@pytest.fixture(scope="module")
def velocity_ensemble():
    return east.front_ensemble(V_L, V_T, range(100))


def test_01_duality_identity():
    t0 = time.perf_counter()
    bad = walk.duality_check(64, 10_000, seed=2024, qs=(2, 3, 5))
    dt = time.perf_counter() - t0
    ok = record(1, "duality identity", not bad and dt < 10,
                f"{len(bad)} failures in 10^4 instances (n<=64, q in 2,3,5), {dt:.1f}s (limit 10s)")
    assert ok


def _coupling_case(seed, q):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 33))
    i = int(rng.integers(2, n + 1))
    omega = noise.sample(n, 4.0, q=q, seed=seed)
    cn = walk.column_noise(omega, i)
    times = cn.times
    traj = walk.evolve(walk.ColumnBlock.identity(n, [i], q=q), omega, 4.0, samples=times)
    marg = walk.column_marginal(traj, i)
    path = east.trajectory(east.EastState.zeros(i - 1, q=q), cn, times)
    return np.array_equal(marg.values[:-1], path.values) and np.array_equal(marg.bits[:-1], path.bits)


def test_02_column_coupling():
    bad = {q: sum(not _coupling_case(s, q) for s in range(1000)) for q in (2, 3)}
    ok = record(2, "column/East coupling", bad[2] == 0 and bad[3] == 0,
                f"mismatching seeds q=2: {bad[2]}/1000, q=3 nonzero pattern: {bad[3]}/1000")
    assert ok


def test_03_gap_equality_sweep():
    t0 = time.perf_counter()
    rep = spectral.verify_theorem_a(max_n=6, max_bits=14)
    dt = time.perf_counter() - t0
    full = {r["n"] for r in rep["rows"] if r["kind"] == "full"}
    ok = record(3, "spectral gap equality", rep["max_diff"] < 1e-9 and full == {2, 3, 4, 5, 6} and dt < 300,
                f"max |gap difference| = {rep['max_diff']:.2e} over {len(rep['rows'])} blocks, {dt:.1f}s")
    assert ok


def _decomposition_case(seed):
    rng = np.random.default_rng(seed)
    q = 2 if seed % 3 else 3
    n = int(rng.integers(3, 33))
    i = int(rng.integers(1, n - 1))
    pool = np.arange(i + 2, n + 1)
    k = int(rng.integers(1, min(3, pool.size) + 1))
    cols = sorted(rng.choice(pool, size=k, replace=False).tolist())
    T = 5.0
    omega = noise.sample(n, T, q=q, seed=100_000 + seed)
    t1 = float(rng.uniform(0, T))
    t2 = float(rng.uniform(t1, T))
    block = walk.ColumnBlock.uniform(n, cols, rng, q=q)
    dec = walk.decompose_column(omega, i, (t1, t2), block, T)
    target = cols[-1]
    truth = walk.evolve(block, omega, T).final.column(target)
    if dec.reconstruct() != truth:
        return False, len(dec.terms)
    if not dec.terms:
        return True, 0
    idx = [term.index for term in dec.terms]
    flipped = omega.with_marks(idx, rng.integers(0, q, size=len(idx)))
    dec2 = walk.decompose_column(flipped, i, (t1, t2), block, T)
    same = dec2.a0 == dec.a0 and [(a.time, a.alpha, a.vector) for a in dec2.terms] == \
        [(a.time, a.alpha, a.vector) for a in dec.terms]
    replay = dec2.reconstruct() == walk.evolve(block, flipped, T).final.column(target)
    return same and replay, len(dec.terms)


def test_04_linear_decomposition():
    res = [_decomposition_case(s) for s in range(1000)]
    bad = sum(not ok for ok, _ in res)
    with_terms = sum(k > 0 for _, k in res)
    ok = record(4, "linear decomposition", bad == 0 and with_terms > 100,
                f"{bad} failures in 1000 instances ({with_terms} with selected rings)")
    assert ok


def _span_case(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 17))
    dim = int(rng.integers(1, min(10, n) + 1))
    a = int(rng.integers(1, n - dim + 2))
    b = a + dim - 1
    T = float(rng.uniform(1, 6))
    omega = noise.sample(n, T, seed=200_000 + seed)
    pool = omega.times[(omega.rows >= a) & (omega.rows <= b)]
    if pool.size == 0:
        return None
    m = int(rng.integers(1, min(pool.size, dim + 3) + 1))
    ring_times = rng.choice(pool, size=m, replace=False)
    return walk.span_certificate(omega, (a, b), ring_times, T)


def test_05_span_certificate():
    out, s = [], 0
    while len(out) < 500:
        r = _span_case(s)
        s += 1
        if r is not None:
            out.append(r)
    bad = sum(d != adj for d, adj in out)
    spanning = sum(d for d, _ in out)
    ok = record(5, "span certificate", bad == 0 and 0 < spanning < 500,
                f"{bad} disagreements in 500 instances (|I|<=10; {spanning} spanning, {500 - spanning} not)")
    assert ok


def test_06_front_velocity(velocity_ensemble):
    t0 = time.perf_counter()
    trajs = [velocity_ensemble[s] for s in V_SEEDS]
    est = east.estimate_velocity(trajs)
    dt = time.perf_counter() - t0
    ok = record(6, "front velocity (L=2000, 30 seeds)", 0.17 <= est.mean <= 0.21 and est.ci_width < 0.01,
                f"v = {est.mean:.4f}, 95% CI [{est.ci[0]:.4f}, {est.ci[1]:.4f}], width {est.ci_width:.4f} "
                f"(limits [0.17, 0.21], < 0.01), per-seed sd {est.sd:.4f}")
    assert ok


@pytest.mark.slow
def test_06b_front_velocity_stretch():
    t0 = time.perf_counter()
    est = east.estimate_velocity(east.front_ensemble(10_000, 45_000.0, range(30)))
    dt = time.perf_counter() - t0
    ok = record("6b", "front velocity stretch (L=10^4, 30 seeds)", 0.185 <= est.mean <= 0.195,
                f"v = {est.mean:.4f}, 95% CI [{est.ci[0]:.4f}, {est.ci[1]:.4f}] (window [0.185, 0.195]), {dt:.0f}s")
    assert ok


def test_07_cutoff_proxy(velocity_ensemble):
    v = east.estimate_velocity(velocity_ensemble).mean
    centre, width, lines = {}, {}, []
    for n in (200, 400, 800):
        T = int(math.ceil(1.4 * n / v))
        prof = stats.tv_proxy_profile(n, np.arange(0, T + 1), runs=1000, seed=50_000 + n)
        centre[n] = stats.crossing_time(prof, 0.5)
        width[n] = stats.crossing_time(prof, 0.1) - stats.crossing_time(prof, 0.9)
        lines.append(f"n={n}: t*={centre[n]:.0f} vs n/v={n / v:.0f} (|diff| {abs(centre[n] - n / v):.0f} <= "
                     f"{3 * math.sqrt(n):.0f}), width {width[n]:.0f}")
    loc = all(abs(centre[n] - n / v) <= 3 * math.sqrt(n) for n in centre)
    ratios = {(a, b): width[b] / width[a] for a, b in ((200, 400), (400, 800), (200, 800))}
    scale = all(1 / 2.5 <= r / math.sqrt(b / a) <= 2.5 and r < b / a for (a, b), r in ratios.items())
    ok = record(7, "cutoff-location proxy", loc and scale,
                "; ".join(lines) + "; width ratios " + ", ".join(f"{b}/{a}: {r:.2f}" for (a, b), r in ratios.items())
                + f" (v from 100 seeds = {v:.4f})")
    assert ok


def test_08_persistence_rate():
    parts, good = [], True
    for n in (2, 3, 4, 5):
        rate = east.fit_decay_rate(east.persistence_sample(n, 100_000, seed=n))
        gap = spectral.spectral_gap(spectral.build_generator(spectral.StateSpace.east(n)))
        rel = abs(rate / gap - 1)
        good &= rel < 0.10
        parts.append(f"n={n}: {rate:.4f} vs {gap:.4f} ({100 * rel:.1f}%)")
    ok = record(8, "persistence decay vs East gap", good, "; ".join(parts) + " (limit 10%)")
    assert ok


def test_09_rank_experiment():
    t0 = time.perf_counter()
    exp = stats.rank_experiment()
    dt = time.perf_counter() - t0
    mid, end = exp.ranks[:, 1], exp.ranks[:, 2]
    ok = record(9, "rank experiment (n=1000)", (exp.ranks[:, 0] == 0).all() and (mid < 333).all()
                and (end == exp.min_dim).sum() >= 4 and dt < 900,
                f"ranks at 6.67e6 steps {mid.tolist()} (all < 200: {bool((mid < 200).all())}), at 4e7 steps "
                f"{end.tolist()} (min dimension {exp.min_dim}), {dt:.0f}s")
    assert ok


def test_10_pattern_concentration():
    n, samples = 1000, 10_000
    rng = np.random.default_rng(10)
    parts, good = [], True
    for k in (2, 3):
        N = np.empty(samples, dtype=np.int64)
        for s in range(samples):
            bits = rng.integers(0, 2, size=(k, n), dtype=np.uint8)
            N[s] = stats.pattern_counts([BitVec.from_bits(b) for b in bits]).N
        _, dof, p = stats.binomial_chisquare(N, n, 2.0**-k)
        dev = int((np.abs(N - n / 2**k) >= n / 2 ** (k + 1)).sum())
        good &= p > 1e-3 and dev == 0
        parts.append(f"k={k}: chi-square p={p:.3f} (dof {dof}), deviations {dev}/{samples}")
    ok = record(10, "pattern concentration", good, "; ".join(parts))
    assert ok


def test_11_exact_vs_monte_carlo():
    space = spectral.StateSpace.full(3)
    G = spectral.build_generator(space)
    M0 = walk.UnitUpperMatrix.identity(3)
    times = [1.0, 2.0, 4.0]
    runs = 1_000_000
    out = walk.sample_states(M0, times, runs, seed=11)
    p0 = np.zeros(G.D)
    p0[space.encode(M0)] = 1
    parts, good = [], True
    for g, t in enumerate(times):
        obs = np.bincount(space.encode_batch(out[:, g]), minlength=G.D)
        exp = spectral.exact_distribution(G, p0, t) * runs
        stat, p = st.chisquare(obs, exp)
        good &= p > 1e-3
        parts.append(f"t={t:g}: p={p:.3f}")
    ok = record(11, "exact distribution vs 10^6 runs (n=3)", good, ", ".join(parts))
    assert ok


def test_12_chernoff_bound():
    c = stats.chernoff_ensemble(m=3, runs=1000, delta=0.2, seed=12)
    ok = record(12, "time-average large deviation bound", c.consistent,
                f"exceedance frequency {c.frequency:.3f} <= bound {c.bound:.3f} (gap {c.gap:.5f}, |A|={c.measure:g})")
    assert ok


def test_note_k_column_constant():
    record(99, "note", True, "the k-column cutoff constant is not measured end to end; criteria 3, 5, 7, 10 cover "
           "its ingredients")
