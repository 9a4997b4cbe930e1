"""Batch command-line driver.

Every subcommand writes a CSV (one header row) and a ``<out>.manifest.json``
sidecar holding the parameters, seeds, versions, wall time and digests.
Exit status: 0 on success, 1 when a checked identity fails, 2 on bad usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import east, noise, spectral, stats, walk
from .errors import ParameterError, SizeError
from .gf2 import is_prime
from .parallel import parse_seeds
from .records import RunManifest, write_csv


def _floats(text: str) -> List[float]:
    """``"0,1,2.5"`` or ``"a:b:step"`` (inclusive of ``b`` up to rounding)."""
    text = text.strip()
    if ":" in text:
        a, b, step = (float(p) for p in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError("grid step must be positive")
        k = int(np.floor((b - a) / step + 1e-9))
        return [a + i * step for i in range(k + 1)]
    return [float(p) for p in text.split(",") if p.strip()]


def _ints(text: str) -> List[int]:
    return [int(round(v)) for v in _floats(text)]


def _range(text: str) -> tuple:
    a, b = text.split("..") if ".." in text else text.split(",")
    return int(a), int(b)


def _seeds(text: str) -> List[int]:
    try:
        return parse_seeds(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _columns(text: Optional[str], n: int) -> List[int]:
    if not text:
        return list(range(1, n + 1))
    out = []
    for part in text.split(","):
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return sorted(set(out))


def _out(args) -> Path:
    return Path(args.out)


# subcommands


def cmd_simulate_walk(args) -> int:
    cols = _columns(args.columns, args.n)
    M0 = walk.ColumnBlock.identity(args.n, cols, q=args.q)
    grid = [] if args.sample_dt is None else _floats(f"0:{args.t}:{args.sample_dt}")
    grid = [g for g in grid if g < args.t]
    if args.mode == "continuous":
        omega = noise.sample(args.n, args.t, q=args.q, seed=args.seed)
        traj = walk.evolve(M0, omega, args.t, samples=grid)
        times = traj.times
    else:
        scale = args.n - 1
        traj = walk.evolve_discrete(M0, int(round(args.t * scale)), args.seed,
                                    samples=[int(round(g * scale)) for g in grid])
        times = traj.times / scale
    rows = []
    for t, st in zip(times, traj.states):
        for j, i in enumerate(cols):
            for x in range(1, i):
                rows.append((float(t), i, x, int(st.data[x - 1, j])))
    out = write_csv(_out(args), ["time", "column", "row", "value"], rows)
    args.manifest.write([out])
    return 0


def cmd_simulate_east(args) -> int:
    q = int(round(1 / (1 - args.density))) if args.density < 1 else 0
    if q < 2 or not np.isclose(args.density, (q - 1) / q) or not is_prime(q):
        raise ParameterError(f"density {args.density} is not (q-1)/q for a prime q")
    omega = noise.sample(args.n + 1, args.t, q=q, seed=args.seed)
    grid = _floats(f"0:{args.t}:{args.sample_dt}") if args.sample_dt else [0.0]
    if grid[-1] < args.t:
        grid.append(float(args.t))
    path = east.trajectory(east.EastState.zeros(args.n, q=q), omega, grid)
    fronts = path.fronts()
    rows = [(float(t), int(f), "".join(str(int(v)) for v in vals)) for t, f, vals in zip(path.times, fronts, path.values)]
    out = write_csv(_out(args), ["time", "front", "state"], rows)
    args.manifest.write([out])
    return 0


def cmd_front_velocity(args) -> int:
    seeds = args.seeds or list(range(args.seed, args.seed + args.runs))
    trajs = east.front_ensemble(args.L, args.T, seeds, args.sample_dt)
    est = east.estimate_velocity(trajs)
    out = write_csv(_out(args), ["seed", "velocity"], list(zip(seeds, est.slopes)))
    args.manifest.seeds = seeds
    args.manifest.extra = {"estimate": {"mean": est.mean, "sd": est.sd, "ci95": list(est.ci), "ci_width": est.ci_width}}
    args.manifest.write([out])
    print(json.dumps(args.manifest.extra["estimate"]))
    return 0


def cmd_spectral_verify(args) -> int:
    rep = spectral.verify_theorem_a(args.max_n, args.max_bits)
    rows = [(r["n"], " ".join(map(str, r["block"])), r["kind"], r["D"], r["method"], r["gap_walk"], r["gap_east"], r["diff"])
            for r in rep["rows"]]
    out = write_csv(_out(args), ["n", "block", "kind", "D", "method", "gap_walk", "gap_east", "abs_diff"], rows)
    args.manifest.extra = {"max_abs_diff": rep["max_diff"]}
    args.manifest.write([out])
    print(f"max |gap difference| = {rep['max_diff']:.3e}")
    return 0 if rep["max_diff"] < 1e-9 else 1


def cmd_tv_exact(args) -> int:
    space = spectral.StateSpace.east(args.n)
    curve = spectral.exact_tv_curve(space, 0, args.t_grid)
    out = write_csv(_out(args), ["time", "tv"], curve)
    args.manifest.write([out])
    return 0


def cmd_tv_proxy(args) -> int:
    prof = stats.tv_proxy_profile(args.n, args.t_grid, args.runs, seed=args.seed, sample_dt=args.sample_dt)
    out = write_csv(_out(args), ["time", "estimate", "se"], list(zip(prof.times, prof.prob, prof.se)))
    args.manifest.seeds = list(range(args.seed, args.seed + args.runs))
    args.manifest.extra = {"crossing_0.5": stats.crossing_time(prof, 0.5)}
    args.manifest.write([out])
    return 0


def cmd_persistence(args) -> int:
    rows = []
    for n in args.n:
        taus = east.persistence_sample(n, args.trials, args.seed)
        rate = east.fit_decay_rate(taus)
        gap = spectral.spectral_gap(spectral.build_generator(spectral.StateSpace.east(n)))
        rows.append((n, args.trials, rate, gap, abs(rate / gap - 1), int(np.isinf(taus).sum())))
    out = write_csv(_out(args), ["n", "trials", "fitted_rate", "east_gap", "rel_error", "timeouts"], rows)
    args.manifest.write([out])
    return 0


def cmd_pattern_stats(args) -> int:
    n, k = args.n, args.k
    cols = list(range(n - k + 1, n + 1))
    t1, t2 = args.window
    rows = []
    for r in range(args.runs):
        s = args.seed + r
        rng = noise.stream(s, 8)
        M0 = walk.ColumnBlock.uniform(n, cols, rng)
        omega = noise.sample(n, t2, seed=s)
        counts = stats.pattern_counts(walk.evolve(M0, omega, t1).final)
        rep = stats.good_rows(M0, omega, (t1, t2))
        rows.append((s, *counts.as_tuple(), int(rep.good.sum())))
    out = write_csv(_out(args), ["seed", "N", "N1", "N2", "N3", "good_rows"], rows)
    args.manifest.seeds = [r[0] for r in rows]
    args.manifest.write([out])
    return 0


def cmd_rank_experiment(args) -> int:
    exp = stats.rank_experiment(args.n, args.rows, args.cols, args.schedule, args.seeds, driver=args.driver)
    out = write_csv(_out(args), ["seed", "step", "rank"], exp.to_rows())
    args.manifest.seeds = list(exp.seeds)
    args.manifest.extra = {"min_dim": exp.min_dim, "full_rank_probability": exp.full_rank_probability}
    args.manifest.write([out])
    return 0


def cmd_duality_check(args) -> int:
    bad = walk.duality_check(args.n, args.cases, args.seed, qs=args.q)
    if bad:
        for b in bad[:20]:
            print(json.dumps(b), file=sys.stderr)
        print(f"{len(bad)} of {args.cases} instances violate the duality identity", file=sys.stderr)
        return 1
    print(f"duality identity holds on {args.cases} instances")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uptri", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, out=True):
        sp = sub.add_parser(name)
        sp.set_defaults(fn=fn)
        if out:
            sp.add_argument("--out", required=True)
        return sp

    sp = add("simulate-walk", cmd_simulate_walk)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--q", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--columns", help="e.g. '5,7' or '3..8'; default all")
    sp.add_argument("--mode", choices=["continuous", "discrete"], default="continuous")
    sp.add_argument("--sample-dt", type=float)

    sp = add("simulate-east", cmd_simulate_east)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--density", type=float, default=0.5)
    sp.add_argument("--sample-dt", type=float)

    sp = add("front-velocity", cmd_front_velocity)
    sp.add_argument("--L", type=int, default=2000)
    sp.add_argument("--T", type=float, default=9000.0)
    sp.add_argument("--runs", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--seeds", type=_seeds)
    sp.add_argument("--sample-dt", type=float, default=1.0)

    sp = add("spectral-verify", cmd_spectral_verify)
    sp.add_argument("--max-n", type=int, default=6)
    sp.add_argument("--max-bits", type=int, default=14)

    sp = add("tv-exact", cmd_tv_exact)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--t-grid", type=_floats, required=True)

    sp = add("tv-proxy", cmd_tv_proxy)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--t-grid", type=_floats, required=True)
    sp.add_argument("--runs", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sample-dt", type=float, default=1.0)

    sp = add("persistence", cmd_persistence)
    sp.add_argument("--n", type=_ints, required=True)
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("pattern-stats", cmd_pattern_stats)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--window", type=_floats, default=[0.0, 50.0])
    sp.add_argument("--runs", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("rank-experiment", cmd_rank_experiment)
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--rows", type=_range, default=(1, 333))
    sp.add_argument("--cols", type=_range, default=(747, 1000))
    sp.add_argument("--schedule", type=_ints, default=[0, 6_666_667, 40_000_000])
    sp.add_argument("--seeds", type=_seeds, default=list(range(5)))
    sp.add_argument("--driver", choices=["discrete", "continuous"], default="discrete")

    sp = add("duality-check", cmd_duality_check, out=False)
    sp.add_argument("--n", type=int, default=64)
    sp.add_argument("--cases", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--q", type=_ints, default=[2, 3, 5])
    return p


def _validate(args, parser) -> None:
    for name in ("n", "L", "runs", "trials", "cases"):
        v = getattr(args, name, None)
        if isinstance(v, int) and v < 1:
            parser.error(f"--{name} must be positive")
    for name in ("t", "T"):
        v = getattr(args, name, None)
        if isinstance(v, float) and v < 0:
            parser.error(f"--{name} must be non-negative")
    if getattr(args, "window", None) is not None and (len(args.window) != 2 or args.window[0] > args.window[1]):
        parser.error("--window needs two increasing times, e.g. 0,50")
    if args.command == "duality-check" and (args.n < 2 or any(not is_prime(q) for q in args.q)):
        parser.error("--n must be >= 2 and every --q prime")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(args, parser)
    params = {k: v for k, v in vars(args).items() if k not in ("fn",)}
    args.manifest = RunManifest(args.command, params, seeds=[params["seed"]] if "seed" in params else [])
    try:
        return int(args.fn(args))
    except (ParameterError, SizeError) as e:
        print(f"uptri {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
