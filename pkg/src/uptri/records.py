"""CSV outputs with a sidecar JSON manifest.

Floats are written with ``repr`` so identical runs give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import __version__

__all__ = ["RunManifest", "write_csv", "manifest_path", "sha256_file"]


def _cell(v) -> str:
    if hasattr(v, "item"):  # numpy scalars; np.float64 would repr as np.float64(...)
        v = v.item()
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        if len(r) != len(header):
            raise ValueError(f"row of width {len(r)} under a {len(header)}-column header")
        w.writerow([_cell(v) for v in r])
    path.write_text(buf.getvalue())
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


@dataclass
class RunManifest:
    command: str
    params: dict
    seeds: list = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)
    extra: dict = field(default_factory=dict)

    def write(self, outputs: Sequence, path: Optional[Path] = None) -> Path:
        import numba
        import numpy
        import scipy

        outputs = [Path(p) for p in outputs]
        doc = {
            "command": self.command,
            "params": self.params,
            "seeds": list(self.seeds),
            "version": __version__,
            "python": sys.version.split()[0],
            "libraries": {"numpy": numpy.__version__, "scipy": scipy.__version__, "numba": numba.__version__},
            "platform": platform.platform(),
            "wall_time_s": round(time.perf_counter() - self.started, 3),
            "outputs": {p.name: sha256_file(p) for p in outputs},
            **self.extra,
        }
        path = path or manifest_path(outputs[0])
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
        return path
