"""Waypoint mission generation and 1 Hz point-mass flight kinematics.

Missions are drawn inside a rectangle spanning an airport pair: the rectangle
is cut into a grid, and one corner of every grid cell crossed by the direct
route becomes a waypoint with a random altitude, speed and passage mode.

:func:`simulate` flies the mission with a direct-to lateral guidance law,
constant-rate turns, bounded longitudinal acceleration and constant vertical
speed altitude capture. Every recorded sample describes the state at the
start of the following one-second step, so ``alt[t+1] - alt[t]`` is exactly
``vs_fpm[t] / 60``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateAreaError, TooFewSamplesError, UnreachableWaypointError
from .geo import (
    KT_TO_MS,
    GeoPoint,
    haversine_distance,
    initial_bearing,
    project_forward,
    wrap_angle,
)


@dataclass(frozen=True, slots=True)
class StateSample:
    """One timestamped aircraft state."""

    time_s: float
    lat_deg: float
    lon_deg: float
    alt_ft: float
    tas_kt: float
    vs_fpm: float
    track_deg: float

    def __post_init__(self) -> None:
        vals = (self.time_s, self.lat_deg, self.lon_deg, self.alt_ft, self.tas_kt, self.vs_fpm, self.track_deg)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite state: {vals}")
        if self.alt_ft < 0 or self.tas_kt < 0:
            raise ValueError(f"negative altitude or speed: {vals}")
        if not (0.0 <= self.track_deg < 360.0):
            raise ValueError(f"track not normalised to [0, 360): {self.track_deg}")

    @property
    def pos(self) -> GeoPoint:
        return GeoPoint(self.lat_deg, self.lon_deg)

    def shifted(self, dt: float) -> StateSample:
        """Copy with ``time_s`` moved by ``dt``."""
        return StateSample(self.time_s + dt, self.lat_deg, self.lon_deg, self.alt_ft,
                           self.tas_kt, self.vs_fpm, self.track_deg)

    def to_dict(self) -> dict:
        return {
            "time_s": self.time_s,
            "lat_deg": self.lat_deg,
            "lon_deg": self.lon_deg,
            "alt_ft": self.alt_ft,
            "tas_kt": self.tas_kt,
            "vs_fpm": self.vs_fpm,
            "track_deg": self.track_deg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> StateSample:
        return cls(*(float(d[k]) for k in FIELDS))


FIELDS = ("time_s", "lat_deg", "lon_deg", "alt_ft", "tas_kt", "vs_fpm", "track_deg")


def samples_to_array(samples: Sequence[StateSample]) -> np.ndarray:
    """Stack samples into an ``(n, 7)`` float array in :data:`FIELDS` order."""
    return np.array(
        [(s.time_s, s.lat_deg, s.lon_deg, s.alt_ft, s.tas_kt, s.vs_fpm, s.track_deg) for s in samples],
        dtype=float,
    ).reshape(-1, 7)


def array_to_samples(arr: np.ndarray) -> list[StateSample]:
    return [StateSample(*map(float, row)) for row in arr]


@dataclass
class Trajectory:
    flight_id: str
    samples: list[StateSample]

    def __post_init__(self) -> None:
        times = [s.time_s for s in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"{self.flight_id}: timestamps not strictly increasing")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return self.samples[-1].time_s - self.samples[0].time_s if self.samples else 0.0

    def to_array(self) -> np.ndarray:
        return samples_to_array(self.samples)


class PassageMode(str, Enum):
    FLYBY = "flyby"
    FLYOVER = "flyover"


@dataclass(frozen=True)
class Waypoint:
    pos: GeoPoint
    alt_ft: float
    speed_kt: float
    mode: PassageMode = PassageMode.FLYBY

    def __post_init__(self) -> None:
        if self.alt_ft < 0:
            raise ValueError("waypoint altitude must be >= 0")
        if self.speed_kt <= 0:
            raise ValueError("waypoint speed must be > 0")

    def to_dict(self) -> dict:
        return {
            "lat_deg": self.pos.lat_deg,
            "lon_deg": self.pos.lon_deg,
            "alt_ft": self.alt_ft,
            "speed_kt": self.speed_kt,
            "mode": self.mode.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Waypoint:
        return cls(GeoPoint(d["lat_deg"], d["lon_deg"]), d["alt_ft"], d["speed_kt"], PassageMode(d["mode"]))


@dataclass(frozen=True)
class Airport:
    name: str
    pos: GeoPoint


AIRPORTS = {
    "KLAF": Airport("KLAF", GeoPoint(40.41231, -86.93690)),
    "KVPZ": Airport("KVPZ", GeoPoint(41.45285, -87.00710)),
}


@dataclass(frozen=True)
class MissionSpec:
    origin: Airport
    destination: Airport
    waypoints: tuple[Waypoint, ...]
    seed: int

    def __post_init__(self) -> None:
        if len(self.waypoints) < 2:
            raise ValueError("a mission needs at least two waypoints")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if haversine_distance(a.pos, b.pos) < 1000.0:
                raise ValueError("consecutive waypoints closer than 1 km")

    def to_dict(self) -> dict:
        return {
            "origin": {"name": self.origin.name, "lat_deg": self.origin.pos.lat_deg, "lon_deg": self.origin.pos.lon_deg},
            "destination": {
                "name": self.destination.name,
                "lat_deg": self.destination.pos.lat_deg,
                "lon_deg": self.destination.pos.lon_deg,
            },
            "waypoints": [w.to_dict() for w in self.waypoints],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> MissionSpec:
        def ap(x):
            return Airport(x["name"], GeoPoint(x["lat_deg"], x["lon_deg"]))

        return cls(ap(d["origin"]), ap(d["destination"]),
                   tuple(Waypoint.from_dict(w) for w in d["waypoints"]), int(d["seed"]))


@dataclass(frozen=True)
class MissionGenConfig:
    margin_m: float = 10_000.0
    grid_rows: int = 4
    grid_cols: int = 4
    min_alt_ft: float = 2_000.0
    max_alt_ft: float = 12_000.0
    min_speed_kt: float = 70.0
    max_speed_kt: float = 250.0
    flyover_prob: float = 0.5
    # must exceed the turn diameter at max speed (about 4.9 km at 250 kt, 3 deg/s)
    min_leg_m: float = 6_000.0

    def __post_init__(self) -> None:
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("grid must be at least 1x1")
        if not (0 <= self.min_alt_ft <= self.max_alt_ft):
            raise ValueError("bad altitude range")
        if not (0 < self.min_speed_kt <= self.max_speed_kt):
            raise ValueError("bad speed range")
        if not (0.0 <= self.flyover_prob <= 1.0):
            raise ValueError("flyover_prob must be in [0, 1]")
        if self.margin_m < 0 or self.min_leg_m < 1000.0:
            raise ValueError("margin must be >= 0 and min_leg_m >= 1 km")


@dataclass(frozen=True)
class SimConfig:
    turn_rate_dps: float = 3.0
    accel_kt_s: float = 1.0
    climb_rate_fpm: float = 1_000.0
    capture_radius_m: float = 200.0
    # flyby turns sharper than this are flown as flyovers
    max_flyby_turn_deg: float = 150.0

    def __post_init__(self) -> None:
        if min(self.turn_rate_dps, self.accel_kt_s, self.climb_rate_fpm, self.capture_radius_m) <= 0:
            raise ValueError("simulation rates and capture radius must be positive")


def _as_airport(p: GeoPoint | Airport, default_name: str) -> Airport:
    return p if isinstance(p, Airport) else Airport(default_name, p)


def mission_rectangle(origin: GeoPoint, destination: GeoPoint, margin_m: float) -> tuple[float, float, float, float]:
    """(lat_min, lat_max, lon_min, lon_max) of the inflated bounding box."""
    dlat = math.degrees(margin_m / 6_371_000.0)
    mid_lat = math.radians((origin.lat_deg + destination.lat_deg) / 2)
    dlon = dlat / math.cos(mid_lat)
    return (
        min(origin.lat_deg, destination.lat_deg) - dlat,
        max(origin.lat_deg, destination.lat_deg) + dlat,
        min(origin.lon_deg, destination.lon_deg) - dlon,
        max(origin.lon_deg, destination.lon_deg) + dlon,
    )


def _traversed_cells(origin: GeoPoint, destination: GeoPoint, rect, rows: int, cols: int) -> list[tuple[int, int]]:
    lat0, lat1, lon0, lon1 = rect
    cells: list[tuple[int, int]] = []
    for f in np.linspace(0.0, 1.0, 64 * max(rows, cols) + 1):
        lat = origin.lat_deg + f * (destination.lat_deg - origin.lat_deg)
        lon = origin.lon_deg + f * (destination.lon_deg - origin.lon_deg)
        r = min(rows - 1, int((lat - lat0) / (lat1 - lat0) * rows))
        c = min(cols - 1, int((lon - lon0) / (lon1 - lon0) * cols))
        if not cells or cells[-1] != (r, c):
            if (r, c) not in cells:
                cells.append((r, c))
    return cells


def generate_mission(
    origin: GeoPoint | Airport,
    destination: GeoPoint | Airport,
    config: MissionGenConfig = MissionGenConfig(),
    rng_seed: int = 0,
) -> MissionSpec:
    """Draw a random waypoint mission between two airports.

    The last traversed grid cell always contributes the destination itself, so
    a 1x1 grid yields the direct two-waypoint route.

    Raises:
        DegenerateAreaError: if the airports are less than 2 km apart.
    """
    org = _as_airport(origin, "ORIG")
    dst = _as_airport(destination, "DEST")
    if haversine_distance(org.pos, dst.pos) < 2000.0:
        raise DegenerateAreaError("origin and destination closer than 2 km")

    rng = np.random.default_rng(rng_seed)
    rect = mission_rectangle(org.pos, dst.pos, config.margin_m)
    lat0, lat1, lon0, lon1 = rect
    cells = _traversed_cells(org.pos, dst.pos, rect, config.grid_rows, config.grid_cols)
    cell_h = (lat1 - lat0) / config.grid_rows
    cell_w = (lon1 - lon0) / config.grid_cols

    def attrs() -> tuple[float, float, PassageMode]:
        alt = float(rng.uniform(config.min_alt_ft, config.max_alt_ft))
        spd = float(rng.uniform(config.min_speed_kt, config.max_speed_kt))
        mode = PassageMode.FLYOVER if rng.random() < config.flyover_prob else PassageMode.FLYBY
        return alt, spd, mode

    points = [org.pos]
    for r, c in cells[:-1]:
        corner = int(rng.integers(4))
        lat = lat0 + (r + (corner // 2)) * cell_h
        lon = lon0 + (c + (corner % 2)) * cell_w
        points.append(GeoPoint(lat, lon))
    points.append(dst.pos)
    pattrs = [attrs() for _ in points]

    kept = [0]
    for i in range(1, len(points) - 1):
        if haversine_distance(points[kept[-1]], points[i]) >= config.min_leg_m:
            kept.append(i)
    while len(kept) > 1 and haversine_distance(points[kept[-1]], dst.pos) < config.min_leg_m:
        kept.pop()
    kept.append(len(points) - 1)

    wps = tuple(Waypoint(points[i], *pattrs[i]) for i in kept)
    return MissionSpec(org, dst, wps, rng_seed)


def _turn_anticipation(prev: GeoPoint, here: GeoPoint, nxt: GeoPoint, tas_kt: float, cfg: SimConfig) -> float | None:
    """Distance before ``here`` at which a flyby turn starts, or None to fly over."""
    course_in = (initial_bearing(here, prev) + 180.0) % 360.0
    course_out = initial_bearing(here, nxt)
    dpsi = abs(wrap_angle(course_out - course_in))
    if dpsi > cfg.max_flyby_turn_deg:
        return None
    radius = tas_kt * KT_TO_MS / math.radians(cfg.turn_rate_dps)
    d = radius * math.tan(math.radians(dpsi) / 2)
    if d > 0.5 * min(haversine_distance(prev, here), haversine_distance(here, nxt)):
        return None
    return d


def simulate(mission: MissionSpec, config: SimConfig = SimConfig(), flight_id: str = "F00000") -> Trajectory:
    """Fly ``mission`` and record the state every second.

    Raises:
        UnreachableWaypointError: if a leg after a turn is shorter than the
            turn diameter, or a waypoint is not captured in reasonable time.
    """
    wps = mission.waypoints
    omega = math.radians(config.turn_rate_dps)
    for i in range(1, len(wps) - 1):
        v = max(wps[i].speed_kt, wps[i + 1].speed_kt) * KT_TO_MS
        leg = haversine_distance(wps[i].pos, wps[i + 1].pos)
        if leg < 2.0 * v / omega:
            raise UnreachableWaypointError(
                f"leg {i}->{i + 1} is {leg:.0f} m, shorter than the {2 * v / omega:.0f} m turn diameter"
            )

    pos = wps[0].pos
    alt = wps[0].alt_ft
    tas = wps[0].speed_kt
    trk = initial_bearing(wps[0].pos, wps[1].pos)
    k = 1
    t = 0
    leg_start = 0
    samples: list[StateSample] = []
    last = len(wps) - 1
    climb_step = config.climb_rate_fpm / 60.0

    def leg_limit(idx: int) -> float:
        leg = haversine_distance(wps[idx - 1].pos, wps[idx].pos)
        v = min(wps[idx - 1].speed_kt, wps[idx].speed_kt) * KT_TO_MS
        return 3.0 * leg / v + 360.0 / config.turn_rate_dps + 60.0

    while True:
        wp = wps[k]
        dist = haversine_distance(pos, wp.pos)
        if k == last:
            if dist <= config.capture_radius_m:
                samples.append(StateSample(float(t), pos.lat_deg, pos.lon_deg, alt, tas, 0.0, trk))
                break
        else:
            switch = False
            lead = None
            if wp.mode is PassageMode.FLYBY:
                lead = _turn_anticipation(wps[k - 1].pos, wp.pos, wps[k + 1].pos, tas, config)
            if lead is not None:
                switch = dist <= max(lead, config.capture_radius_m)
            else:
                passed = dist > 0 and abs(wrap_angle(initial_bearing(pos, wp.pos) - trk)) > 90.0
                switch = dist <= config.capture_radius_m or (passed and dist < 4 * config.capture_radius_m)
            if switch:
                k += 1
                leg_start = t
                wp = wps[k]
        if t - leg_start > leg_limit(k):
            raise UnreachableWaypointError(f"waypoint {k} not captured after {t - leg_start} s")

        desired = initial_bearing(pos, wp.pos) if pos != wp.pos else trk
        rate = max(-config.turn_rate_dps, min(config.turn_rate_dps, wrap_angle(desired - trk)))
        accel = max(-config.accel_kt_s, min(config.accel_kt_s, wp.speed_kt - tas))
        dalt = max(-climb_step, min(climb_step, wp.alt_ft - alt))
        samples.append(StateSample(float(t), pos.lat_deg, pos.lon_deg, alt, tas, dalt * 60.0, trk))

        pos = project_forward(pos, (trk + rate / 2.0) % 360.0, (tas + accel / 2.0) * KT_TO_MS)
        trk = (trk + rate) % 360.0
        if trk >= 360.0:
            trk = 0.0
        tas += accel
        alt = max(0.0, alt + dalt)
        t += 1

    return Trajectory(flight_id, samples)


def track_change_sum(tracks: Iterable[float]) -> float:
    """Sum of wrap-aware absolute differences between consecutive tracks."""
    arr = np.asarray(list(tracks), dtype=float)
    if arr.size < 2:
        raise TooFewSamplesError("need at least two samples")
    d = (np.diff(arr) + 180.0) % 360.0 - 180.0
    return float(np.sum(np.abs(d)))


def cumulative_track_change(traj: Trajectory | Sequence[StateSample]) -> float:
    """Total heading change along a sequence of samples, in degrees."""
    samples = traj.samples if isinstance(traj, Trajectory) else traj
    return track_change_sum(s.track_deg for s in samples)
