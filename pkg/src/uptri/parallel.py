"""Seed fan-out.  Results come back in seed order whatever the scheduling."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")

THREADS_ENV = "UPTRI_THREADS"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def map_seeds(fn: Callable[[int], T], seeds: Iterable[int]) -> List[T]:
    seeds = list(seeds)
    workers = min(thread_count(), max(1, len(seeds)))
    if workers == 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def parse_seeds(spec: str) -> List[int]:
    """``"7"``, ``"1,2,5"`` or ``"a..b"`` (inclusive)."""
    out: List[int] = []
    for part in str(spec).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError(f"empty seed range {part}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("no seeds given")
    return out
