"""JSON Lines helpers shared by every stage.

Trajectories and ADS-B streams use one file per flight and one sample per
line, keyed ``time_s, lat_deg, lon_deg, alt_ft, tas_kt, vs_fpm, track_deg``.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable, Iterator

from .simkernel import StateSample, Trajectory


def dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, allow_nan=False)


def write_jsonl(path: str | os.PathLike, rows: Iterable[dict]) -> int:
    """Write rows atomically; returns the number of lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    n = 0
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(dumps(row) + "\n")
            n += 1
    os.replace(tmp, path)
    return n


def iter_jsonl(path: str | os.PathLike) -> Iterator[dict]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def read_jsonl(path: str | os.PathLike) -> list[dict]:
    return list(iter_jsonl(path))


def write_json(path: str | os.PathLike, obj, indent: int = 2) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=indent, ensure_ascii=False, allow_nan=False)
        f.write("\n")
    os.replace(tmp, path)


def read_json(path: str | os.PathLike):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def write_samples(path: str | os.PathLike, samples: Iterable[StateSample]) -> int:
    return write_jsonl(path, (s.to_dict() for s in samples))


def read_samples(path: str | os.PathLike) -> list[StateSample]:
    return [StateSample.from_dict(d) for d in iter_jsonl(path)]


def write_trajectory(directory: str | os.PathLike, traj: Trajectory) -> Path:
    path = Path(directory) / f"{traj.flight_id}.jsonl"
    write_samples(path, traj.samples)
    return path


def read_trajectory(path: str | os.PathLike) -> Trajectory:
    path = Path(path)
    return Trajectory(path.stem, read_samples(path))
