"""CSV outputs and run manifests.

Numbers are written with ``repr`` so that every float round-trips exactly;
files are UTF-8 with ``\\n`` line endings.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    return repr(float(v))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def trajectory_rows(traj, with_x: bool = True):
    for t, x, y, ev in zip(traj.times, traj.x, traj.y, traj.events):
        yield (t, x, y, str(ev)) if with_x else (t, y, str(ev))


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def software_versions() -> dict:
    import numba
    import numpy
    import scipy

    return {
        "burstpdmp": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


class RunRecorder:
    """Collects stage timings and output files, then writes ``manifest.json``."""

    def __init__(self, command: str, config_dict: dict, config_hash: str, seeds: dict, out_dir: Path):
        self.command = command
        self.config = config_dict
        self.config_hash = config_hash
        self.seeds = seeds
        self.out_dir = Path(out_dir)
        self.timings: dict[str, float] = {}
        self.outputs: list[Path] = []
        self.extra: dict = {}
        self._start = time.perf_counter()
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def csv(self, name: str, header, rows) -> Path:
        path = write_csv(self.out_dir / name, header, rows)
        self.outputs.append(path)
        return path

    def write(self) -> Path:
        manifest = {
            "command": self.command,
            "software": software_versions(),
            "config_hash": self.config_hash,
            "config": self.config,
            "seeds": self.seeds,
            "started": self.started,
            "wall_clock_s": time.perf_counter() - self._start,
            "timings_s": self.timings,
            "outputs": [
                {"path": p.relative_to(self.out_dir).as_posix(), "sha256": sha256_file(p)} for p in self.outputs
            ],
            **self.extra,
        }
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=False) + "\n", encoding="utf-8")
        return path
