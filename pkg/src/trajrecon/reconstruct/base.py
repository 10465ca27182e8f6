"""Reconstructor result type and shared helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import NoObservationsError
from ..simkernel import StateSample, samples_to_array

MEASURED = "measured-support"
EXTRAPOLATED = "extrapolated"
MODEL = "model"
FILLED = "filled"


@dataclass
class ReconstructionResult:
    """One estimate per requested query time, in request order."""

    estimates: list[StateSample]
    sources: list[str]
    diagnostics: dict = field(default_factory=dict)
    # 1-sigma horizontal position uncertainty, when the method provides one
    position_sigma_m: list[float] | None = None

    def __post_init__(self) -> None:
        if len(self.sources) != len(self.estimates):
            raise ValueError("one source flag per estimate")

    @property
    def query_times(self) -> list[float]:
        return [s.time_s for s in self.estimates]

    def to_dict(self) -> dict:
        d = {
            "estimates": [s.to_dict() for s in self.estimates],
            "sources": list(self.sources),
            "diagnostics": self.diagnostics,
        }
        if self.position_sigma_m is not None:
            d["position_sigma_m"] = list(self.position_sigma_m)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ReconstructionResult:
        return cls([StateSample.from_dict(x) for x in d["estimates"]], list(d["sources"]),
                   dict(d.get("diagnostics", {})), d.get("position_sigma_m"))


def check_inputs(points: Sequence[StateSample], query_times: Sequence[float], min_points: int = 1) -> np.ndarray:
    if len(points) < min_points:
        raise NoObservationsError(f"need at least {min_points} observation(s), got {len(points)}")
    q = np.asarray(query_times, dtype=float)
    if np.any(np.diff(q) < 0):
        raise ValueError("query times must be sorted")
    arr = samples_to_array(points)
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ValueError("observation times must be strictly increasing")
    return arr


def make_sample(t: float, lat: float, lon: float, alt: float, tas: float, vs: float, trk: float) -> StateSample:
    trk = float(trk) % 360.0
    return StateSample(float(t), float(lat), float(lon), max(0.0, float(alt)), abs(float(tas)),
                       float(vs), 0.0 if trk >= 360.0 else trk)
