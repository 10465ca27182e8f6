"""Turn clean 1 Hz trajectories into irregular, noisy ADS-B streams."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyTrajectoryError
from .simkernel import StateSample, Trajectory

# ADS-B points share the StateSample shape; only time_s may be fractional.
AdsbPoint = StateSample


@dataclass(frozen=True)
class DegradeConfig:
    sigma_lat_deg: float = 3e-5
    sigma_lon_deg: float = 3e-5
    sigma_alt_ft: float = 25.0
    sigma_tas_kt: float = 2.0
    sigma_vs_fpm: float = 50.0
    sigma_track_deg: float = 2.0
    # interval = (mean - jitter) + Exponential(jitter), so mean and std are as named
    interval_mean_s: float = 1.5
    interval_jitter_s: float = 0.5
    gap_rate_per_min: float = 1.0
    gap_min_s: float = 5.0
    gap_max_s: float = 20.0
    # explicit (start_s, duration_s) dropouts, applied on top of the random ones
    forced_gaps: tuple[tuple[float, float], ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        sigmas = (self.sigma_lat_deg, self.sigma_lon_deg, self.sigma_alt_ft,
                  self.sigma_tas_kt, self.sigma_vs_fpm, self.sigma_track_deg)
        if min(sigmas) < 0:
            raise ValueError("noise sigmas must be >= 0")
        if self.interval_mean_s <= 0:
            raise ValueError("mean inter-arrival must be > 0")
        if not (0 <= self.interval_jitter_s <= self.interval_mean_s):
            raise ValueError("jitter must lie in [0, mean]")
        if self.gap_rate_per_min < 0 or not (0 <= self.gap_min_s <= self.gap_max_s):
            raise ValueError("bad gap model")
        if any(d < 0 for _, d in self.forced_gaps):
            raise ValueError("gap durations must be >= 0")
        object.__setattr__(self, "forced_gaps", tuple((float(a), float(b)) for a, b in self.forced_gaps))

    @property
    def sigmas(self) -> np.ndarray:
        """Per-field sigmas aligned with FIELDS[1:]."""
        return np.array([self.sigma_lat_deg, self.sigma_lon_deg, self.sigma_alt_ft,
                         self.sigma_tas_kt, self.sigma_vs_fpm, self.sigma_track_deg])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["forced_gaps"] = [list(g) for g in self.forced_gaps]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> DegradeConfig:
        d = dict(d)
        d["forced_gaps"] = tuple(tuple(g) for g in d.get("forced_gaps", ()))
        return cls(**d)


def sample_times(t0: float, t1: float, cfg: DegradeConfig, rng: np.random.Generator) -> np.ndarray:
    """Irregular observation times in [t0, t1], starting at t0."""
    floor = cfg.interval_mean_s - cfg.interval_jitter_s
    # over-draw, then trim; loop only in the rare case it falls short
    n = int((t1 - t0) / max(floor + cfg.interval_jitter_s * 0.5, 1e-3)) + 16
    times = [t0]
    while times[-1] <= t1:
        if cfg.interval_jitter_s > 0:
            steps = floor + rng.exponential(cfg.interval_jitter_s, size=n)
        else:
            steps = np.full(n, floor)
        # strictly positive increments only
        steps = steps[steps > 0]
        times.extend((times[-1] + np.cumsum(steps)).tolist())
    out = np.asarray(times)
    return out[out <= t1]


def draw_gaps(t0: float, t1: float, cfg: DegradeConfig, rng: np.random.Generator) -> list[tuple[float, float]]:
    """Dropout windows as (start, end) pairs: Poisson starts, uniform durations."""
    gaps: list[tuple[float, float]] = []
    if cfg.gap_rate_per_min > 0:
        rate = cfg.gap_rate_per_min / 60.0
        t = t0
        while True:
            t += rng.exponential(1.0 / rate)
            if t > t1:
                break
            gaps.append((t, t + rng.uniform(cfg.gap_min_s, cfg.gap_max_s)))
    gaps.extend((a, a + d) for a, d in cfg.forced_gaps)
    return gaps


def interpolate_truth(truth: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Linear interpolation of a 1 Hz state array at arbitrary times.

    Track is interpolated along the shorter arc. Exact knots reproduce the
    stored values bit for bit.
    """
    t = truth[:, 0]
    idx = np.clip(np.searchsorted(t, times, side="right") - 1, 0, len(t) - 2) if len(t) > 1 else np.zeros(len(times), int)
    if len(t) == 1:
        out = np.repeat(truth[:1], len(times), axis=0)
        out[:, 0] = times
        return out
    a = truth[idx]
    b = truth[idx + 1]
    w = ((times - a[:, 0]) / (b[:, 0] - a[:, 0]))[:, None]
    out = a + w * (b - a)
    dtrk = (b[:, 6] - a[:, 6] + 180.0) % 360.0 - 180.0
    out[:, 6] = (a[:, 6] + w[:, 0] * dtrk) % 360.0
    out[:, 0] = times
    return out


def degrade(traj: Trajectory, cfg: DegradeConfig = DegradeConfig()) -> list[AdsbPoint]:
    """Resample ``traj`` irregularly, cut dropout gaps and add Gaussian noise.

    Raises:
        EmptyTrajectoryError: if the trajectory has no samples.
    """
    if not traj.samples:
        raise EmptyTrajectoryError(f"{traj.flight_id}: empty trajectory")
    rng = np.random.default_rng(cfg.seed)
    truth = traj.to_array()
    t0, t1 = truth[0, 0], truth[-1, 0]

    times = sample_times(t0, t1, cfg, rng)
    keep = np.ones(len(times), dtype=bool)
    for start, end in draw_gaps(t0, t1, cfg, rng):
        keep &= ~((times >= start) & (times < end))
    times = times[keep]
    if not len(times):
        return []

    obs = interpolate_truth(truth, times)
    noise = rng.normal(0.0, 1.0, size=(len(times), 6)) * cfg.sigmas
    obs[:, 1:] += noise
    obs[:, 3] = np.maximum(obs[:, 3], 0.0)
    obs[:, 4] = np.abs(obs[:, 4])
    obs[:, 6] %= 360.0
    obs[:, 6][obs[:, 6] >= 360.0] = 0.0
    off = (obs[:, 2] < -180.0) | (obs[:, 2] >= 180.0)
    obs[off, 2] = (obs[off, 2] + 180.0) % 360.0 - 180.0
    return [StateSample(*map(float, row)) for row in obs]
