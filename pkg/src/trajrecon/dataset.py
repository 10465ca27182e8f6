"""Windowing, eligibility filtering and flight-level train/val/test splits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .codec import NORTH_WEST, Hemisphere, quantize_sample
from .errors import EmptyCorpusError, TrajectoryTooShortError
from .simkernel import StateSample, Trajectory, track_change_sum

log = logging.getLogger(__name__)

WINDOW_S = 60
TARGET_STEP_S = 5
ALT_THRESHOLD_FT = 300.0
TRACK_THRESHOLD_DEG = 30.0


@dataclass
class WindowRecord:
    """One fixed-length example; all times are relative to the window start.

    ``targets`` are truth samples on the 5-s grid, already rounded to the
    codec precision so they are exactly what a perfect model would emit.
    """

    flight_id: str
    window_start_s: int
    inputs: list[StateSample]
    targets: list[StateSample]
    window_s: int = WINDOW_S

    def __post_init__(self) -> None:
        if not self.inputs:
            raise ValueError("a window needs at least one input point")
        if any(abs(s.time_s / TARGET_STEP_S - round(s.time_s / TARGET_STEP_S)) > 1e-9 for s in self.targets):
            raise ValueError("target times must be multiples of 5 s")

    @property
    def record_id(self) -> str:
        return f"{self.flight_id}:{self.window_start_s}"

    @property
    def query_times(self) -> list[float]:
        return [s.time_s for s in self.targets]

    def to_dict(self) -> dict:
        return {
            "flight_id": self.flight_id,
            "window_start_s": self.window_start_s,
            "window_s": self.window_s,
            "inputs": [s.to_dict() for s in self.inputs],
            "targets": [s.to_dict() for s in self.targets],
        }

    @classmethod
    def from_dict(cls, d: dict) -> WindowRecord:
        return cls(
            d["flight_id"],
            int(d["window_start_s"]),
            [StateSample.from_dict(x) for x in d["inputs"]],
            [StateSample.from_dict(x) for x in d["targets"]],
            int(d.get("window_s", WINDOW_S)),
        )


def make_windows(
    truth: Trajectory,
    obs: Sequence[StateSample],
    stride_s: int = WINDOW_S,
    window_s: int = WINDOW_S,
    step_s: int = TARGET_STEP_S,
    hemisphere: Hemisphere = NORTH_WEST,
) -> list[WindowRecord]:
    """Slice a flight into fixed windows with targets every ``step_s``.

    Windows start at the first truth timestamp and advance by ``stride_s``.
    Input points are those inside the closed window; windows that contain no
    observation at all are discarded.

    Raises:
        TrajectoryTooShortError: if the flight is shorter than one window.
    """
    if stride_s <= 0 or window_s <= 0 or window_s % step_s:
        raise ValueError("stride and window must be positive; window a multiple of the step")
    if not truth.samples or truth.duration_s < window_s:
        raise TrajectoryTooShortError(f"{truth.flight_id}: {truth.duration_s:.0f} s < {window_s} s window")

    t0 = truth.samples[0].time_s
    index = {int(round(s.time_s - t0)): s for s in truth.samples}
    obs_t = np.array([p.time_s for p in obs], dtype=float)
    out = []
    start = int(round(t0))
    end = truth.samples[-1].time_s
    while start + window_s <= end:
        lo, hi = np.searchsorted(obs_t, start, "left"), np.searchsorted(obs_t, start + window_s, "right")
        if hi > lo:
            inputs = [p.shifted(-start) for p in obs[lo:hi]]
            targets = [
                quantize_sample(index[start - int(t0) + k].shifted(-start), hemisphere=hemisphere)
                for k in range(0, window_s + 1, step_s)
            ]
            out.append(WindowRecord(truth.flight_id, start, inputs, targets, window_s))
        start += stride_s
    return out


def window_stats(w: WindowRecord) -> tuple[float, float]:
    """(altitude range in ft, cumulative track change in deg) over the targets."""
    alts = [s.alt_ft for s in w.targets]
    return max(alts) - min(alts), track_change_sum(s.track_deg for s in w.targets)


def is_eligible(w: WindowRecord, alt_threshold_ft: float = ALT_THRESHOLD_FT,
                track_threshold_deg: float = TRACK_THRESHOLD_DEG) -> bool:
    """True for windows that climb/descend or turn enough to be interesting."""
    dalt, dtrk = window_stats(w)
    return dalt > alt_threshold_ft or dtrk > track_threshold_deg


@dataclass
class SplitManifest:
    seed: int
    ratios: tuple[float, float, float]
    train: list[str] = field(default_factory=list)
    val: list[str] = field(default_factory=list)
    test: list[str] = field(default_factory=list)

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def assignment(self) -> dict[str, str]:
        return {rid: name for name in ("train", "val", "test") for rid in getattr(self, name)}

    def to_dict(self) -> dict:
        return {"seed": self.seed, "ratios": list(self.ratios), "counts": list(self.sizes()),
                "train": self.train, "val": self.val, "test": self.test}

    @classmethod
    def from_dict(cls, d: dict) -> SplitManifest:
        return cls(int(d["seed"]), tuple(d["ratios"]), list(d["train"]), list(d["val"]), list(d["test"]))


def _closest_subset(sizes: Sequence[int], target: int) -> list[int]:
    """Indices of a subset whose sum is closest to ``target`` (earliest items preferred)."""
    cap = target + max(sizes, default=0)
    parent = np.full(cap + 1, -1, dtype=np.int64)
    reach = np.zeros(cap + 1, dtype=bool)
    reach[0] = True
    for i, c in enumerate(sizes):
        if c <= 0 or c > cap:
            continue
        # states reachable with items < i, shifted by c, that are new
        new = np.zeros_like(reach)
        new[c:] = reach[:-c]
        new &= ~reach
        parent[new] = i
        reach |= new
    sums = np.nonzero(reach)[0]
    best = int(sums[np.argmin(np.abs(sums - target) * 2 + (sums > target))])
    chosen = []
    s = best
    while s > 0:
        i = int(parent[s])
        chosen.append(i)
        s -= sizes[i]
    return sorted(chosen)


def split(
    records: Sequence[WindowRecord],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    group: Callable[[WindowRecord], str] = lambda r: r.flight_id,
) -> SplitManifest:
    """Deterministic train/val/test partition at flight granularity.

    Flights are shuffled by ``seed`` and whole flights are assigned so each
    split's window count lands as close as possible to its ratio; test and
    validation are filled first, training takes the rest.

    Raises:
        EmptyCorpusError: if ``records`` is empty.
    """
    if not records:
        raise EmptyCorpusError("no records to split")
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(records)
    by_group: dict[str, list[str]] = {}
    for r in records:
        by_group.setdefault(group(r), []).append(r.record_id)
    names = sorted(by_group)
    perm = np.random.default_rng(seed).permutation(len(names))
    order = [names[i] for i in perm]

    want_val = int(round(ratios[1] * n))
    want_test = int(round(ratios[2] * n))
    pool = list(order)
    picked = {}
    for split_name, want in (("test", want_test), ("val", want_val)):
        idx = _closest_subset([len(by_group[g]) for g in pool], want)
        picked[split_name] = [pool[i] for i in idx]
        taken = set(idx)
        pool = [g for i, g in enumerate(pool) if i not in taken]
    picked["train"] = pool

    man = SplitManifest(seed, tuple(float(x) for x in ratios),
                        *[[rid for g in picked[k] for rid in sorted(by_group[g], key=_rid_key)]
                          for k in ("train", "val", "test")])
    for got, ratio in zip(man.sizes(), ratios):
        if abs(got - ratio * n) > 1.0 + 1e-9:
            log.warning("split sizes %s miss ratios %s by more than one record", man.sizes(), ratios)
            break
    return man


def _rid_key(rid: str) -> tuple[str, int]:
    fid, start = rid.rsplit(":", 1)
    return fid, int(start)
