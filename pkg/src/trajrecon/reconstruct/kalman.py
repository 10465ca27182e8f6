"""Kalman filter and Rauch-Tung-Striebel smoother in a local ENU frame.

Two motion models are available:

``cv``
    Constant velocity, state ``[e, n, u, ve, vn, vu]`` (m, m, ft, m/s, m/s,
    ft/s) with white-noise acceleration. Linear, so this is a plain KF.
``ct``
    Coordinated turn, state ``[e, n, u, V, psi, omega, vu]`` with speed,
    heading and turn rate. Propagation is nonlinear and handled as an EKF
    with numerically differentiated Jacobians.

Positions come from lat/lon/alt. Speed, track and vertical rate are used as
velocity pseudo-measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import SingularCovarianceError
from ..geo import KT_TO_MS, GeoPoint, enu_arrays, lat_lon_arrays
from ..simkernel import StateSample
from .base import EXTRAPOLATED, MEASURED, ReconstructionResult, check_inputs, make_sample


@dataclass(frozen=True)
class KalmanConfig:
    # white-noise acceleration spectral densities
    accel_psd_h: float = 0.5  # m^2/s^3
    accel_psd_v: float = 20.0  # ft^2/s^3
    # turn-rate acceleration density for the ct model, rad^2/s^3
    turn_psd: float = 1e-5
    sigma_lat_deg: float = 3e-5
    sigma_lon_deg: float = 3e-5
    sigma_alt_ft: float = 25.0
    sigma_tas_kt: float = 2.0
    sigma_vs_fpm: float = 50.0
    sigma_track_deg: float = 2.0
    use_velocity: bool = True
    smoother: bool = True
    model: str = "cv"

    def __post_init__(self) -> None:
        noise = (self.accel_psd_h, self.accel_psd_v, self.turn_psd, self.sigma_lat_deg, self.sigma_lon_deg,
                 self.sigma_alt_ft, self.sigma_tas_kt, self.sigma_vs_fpm, self.sigma_track_deg)
        if min(noise) <= 0:
            raise ValueError("all Kalman noise parameters must be > 0")
        if self.model not in ("cv", "ct"):
            raise ValueError(f"unknown motion model {self.model!r}")

    @classmethod
    def from_degrade(cls, dcfg, **overrides) -> KalmanConfig:
        """Measurement noise matched to a DegradeConfig; zero sigmas get a tiny floor."""
        floor = 1e-9
        return cls(
            sigma_lat_deg=max(dcfg.sigma_lat_deg, floor),
            sigma_lon_deg=max(dcfg.sigma_lon_deg, floor),
            sigma_alt_ft=max(dcfg.sigma_alt_ft, floor),
            sigma_tas_kt=max(dcfg.sigma_tas_kt, floor),
            sigma_vs_fpm=max(dcfg.sigma_vs_fpm, floor),
            sigma_track_deg=max(dcfg.sigma_track_deg, floor),
            **overrides,
        )


def _wrap_pi(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def _cv_block(dt: float, q: float) -> np.ndarray:
    a = abs(dt)
    return q * np.array([[a ** 3 / 3, a ** 2 / 2], [a ** 2 / 2, a]])


class _CV:
    dim = 6

    def __init__(self, cfg: KalmanConfig):
        self.cfg = cfg

    def predict(self, x, dt):
        F = np.eye(6)
        F[0, 3] = F[1, 4] = F[2, 5] = dt
        return F @ x, F

    def Q(self, dt):
        Q = np.zeros((6, 6))
        for i, q in ((0, self.cfg.accel_psd_h), (1, self.cfg.accel_psd_h), (2, self.cfg.accel_psd_v)):
            b = _cv_block(dt, q)
            Q[np.ix_([i, i + 3], [i, i + 3])] = b
        return Q

    def measurement(self, z_pos, obs, R_pos):
        """Measurement vector, H and R for one observation."""
        if not self.cfg.use_velocity:
            return z_pos, np.eye(6)[:3], R_pos
        v = obs[4] * KT_TO_MS
        psi = math.radians(obs[6])
        s, c = math.sin(psi), math.cos(psi)
        sv = self.cfg.sigma_tas_kt * KT_TO_MS
        sp = math.radians(self.cfg.sigma_track_deg)
        J = np.array([[s, v * c], [c, -v * s]])
        Rv = J @ np.diag([sv ** 2, sp ** 2]) @ J.T
        z = np.concatenate([z_pos, [v * s, v * c, obs[5] / 60.0]])
        R = np.zeros((6, 6))
        R[:3, :3] = R_pos
        R[3:5, 3:5] = Rv
        R[5, 5] = (self.cfg.sigma_vs_fpm / 60.0) ** 2
        return z, np.eye(6), R

    def residual(self, a, b):
        return a - b

    def initial(self, z, R):
        if self.cfg.use_velocity:
            return z.copy(), R + np.eye(6) * 1e-6
        x = np.concatenate([z, np.zeros(3)])
        P = np.zeros((6, 6))
        P[:3, :3] = R
        P[3:, 3:] = np.diag([100.0 ** 2, 100.0 ** 2, 50.0 ** 2])
        return x, P

    def velocity(self, x):
        """(tas_kt, track_deg, vs_fpm) for a state."""
        return math.hypot(x[3], x[4]) / KT_TO_MS, math.degrees(math.atan2(x[3], x[4])), x[5] * 60.0


class _CT:
    dim = 7

    def __init__(self, cfg: KalmanConfig):
        self.cfg = cfg

    @staticmethod
    def _f(x, dt):
        e, n, u, v, psi, om, vu = x
        if abs(om) > 1e-9:
            e2 = e + v / om * (math.cos(psi) - math.cos(psi + om * dt))
            n2 = n + v / om * (math.sin(psi + om * dt) - math.sin(psi))
        else:
            e2 = e + v * dt * math.sin(psi)
            n2 = n + v * dt * math.cos(psi)
        return np.array([e2, n2, u + vu * dt, v, psi + om * dt, om, vu])

    def predict(self, x, dt):
        fx = self._f(x, dt)
        F = np.empty((7, 7))
        for j in range(7):
            h = 1e-6 * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            F[:, j] = (self._f(xp, dt) - self._f(xm, dt)) / (2 * h)
        return fx, F

    def Q(self, dt):
        a = abs(dt)
        Q = np.zeros((7, 7))
        Q[0, 0] = Q[1, 1] = self.cfg.accel_psd_h * a ** 3 / 3
        Q[3, 3] = self.cfg.accel_psd_h * a
        Q[np.ix_([4, 5], [4, 5])] = _cv_block(dt, self.cfg.turn_psd)
        Q[np.ix_([2, 6], [2, 6])] = _cv_block(dt, self.cfg.accel_psd_v)
        return Q

    def measurement(self, z_pos, obs, R_pos):
        z = np.concatenate([z_pos, [obs[4] * KT_TO_MS, math.radians(obs[6]), obs[5] / 60.0]])
        H = np.zeros((6, 7))
        H[0, 0] = H[1, 1] = H[2, 2] = H[3, 3] = H[4, 4] = H[5, 6] = 1.0
        R = np.zeros((6, 6))
        R[:3, :3] = R_pos
        R[3, 3] = (self.cfg.sigma_tas_kt * KT_TO_MS) ** 2
        R[4, 4] = math.radians(self.cfg.sigma_track_deg) ** 2
        R[5, 5] = (self.cfg.sigma_vs_fpm / 60.0) ** 2
        if not self.cfg.use_velocity:
            return z_pos, H[:3], R_pos
        return z, H, R

    def residual(self, a, b):
        d = a - b
        if len(d) > 4:
            d[4] = _wrap_pi(d[4])
        return d

    def initial(self, z, R):
        x = np.zeros(7)
        P = np.zeros((7, 7))
        x[:3] = z[:3]
        P[:3, :3] = R[:3, :3]
        if len(z) > 3:
            x[3], x[4], x[6] = z[3], z[4], z[5]
            P[3, 3], P[4, 4], P[6, 6] = R[3, 3], R[4, 4], R[5, 5]
        else:
            P[3, 3], P[4, 4], P[6, 6] = 100.0 ** 2, math.pi ** 2, 50.0 ** 2
        P[5, 5] = math.radians(3.0) ** 2
        return x, P

    def velocity(self, x):
        return abs(x[3]) / KT_TO_MS, math.degrees(x[4] + (math.pi if x[3] < 0 else 0.0)), x[6] * 60.0

    def state_diff(self, a, b):
        d = a - b
        d[4] = _wrap_pi(d[4])
        return d


def _solve(S: np.ndarray, B: np.ndarray) -> np.ndarray:
    try:
        if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1e14:
            raise np.linalg.LinAlgError("ill-conditioned")
        return np.linalg.solve(S, B)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(f"covariance not invertible: {exc}") from exc


def reconstruct_kalman(
    points: Sequence[StateSample],
    query_times: Sequence[float],
    cfg: KalmanConfig = KalmanConfig(),
) -> ReconstructionResult:
    """Filter (and optionally smooth) the observations, read out at query times.

    The local frame is anchored at the first observation. Query times before
    the first or after the last observation are pure model extrapolations and
    are flagged as such; their covariance grows with the distance in time.

    Raises:
        NoObservationsError: with fewer than two observations.
        SingularCovarianceError: if an innovation or prediction covariance
            cannot be inverted (usually a pathological noise configuration).
    """
    arr = check_inputs(points, query_times, min_points=2)
    q = np.asarray(query_times, dtype=float)
    model = _CT(cfg) if cfg.model == "ct" else _CV(cfg)
    diff = getattr(model, "state_diff", lambda a, b: a - b)

    origin = GeoPoint(arr[0, 1], arr[0, 2])
    alt0 = arr[0, 3]
    east, north = enu_arrays(origin, arr[:, 1], arr[:, 2])
    up = arr[:, 3] - alt0
    k = math.radians(6_371_000.0)
    R_pos = np.diag([
        (cfg.sigma_lon_deg * k * math.cos(math.radians(origin.lat_deg))) ** 2,
        (cfg.sigma_lat_deg * k) ** 2,
        cfg.sigma_alt_ft ** 2,
    ])

    t_first, t_last = arr[0, 0], arr[-1, 0]
    grid = np.union1d(arr[:, 0], q[q >= t_first])
    obs_at = {float(t): i for i, t in enumerate(arr[:, 0])}

    xs, Ps, xps, Pps, Fs = [], [], [], [], []
    x = P = None
    for gi, t in enumerate(grid):
        if gi == 0:
            z, H, R = model.measurement(np.array([east[0], north[0], up[0]]), arr[0], R_pos)
            x, P = model.initial(z, R)
            xps.append(x.copy())
            Pps.append(P.copy())
            Fs.append(np.eye(model.dim))
        else:
            dt = t - grid[gi - 1]
            x, F = model.predict(x, dt)
            P = F @ P @ F.T + model.Q(dt)
            xps.append(x.copy())
            Pps.append(P.copy())
            Fs.append(F)
            i = obs_at.get(float(t))
            if i is not None:
                z, H, R = model.measurement(np.array([east[i], north[i], up[i]]), arr[i], R_pos)
                S = H @ P @ H.T + R
                K = _solve(S, H @ P).T
                x = x + K @ model.residual(z, H @ x)
                IKH = np.eye(model.dim) - K @ H
                P = IKH @ P @ IKH.T + K @ R @ K.T
        xs.append(x.copy())
        Ps.append(P.copy())

    if cfg.smoother:
        for j in range(len(grid) - 2, -1, -1):
            C = _solve(Pps[j + 1], Fs[j + 1] @ Ps[j]).T
            xs[j] = xs[j] + C @ diff(xs[j + 1], xps[j + 1])
            Ps[j] = Ps[j] + C @ (Ps[j + 1] - Pps[j + 1]) @ C.T
            Ps[j] = 0.5 * (Ps[j] + Ps[j].T)

    at = {float(t): j for j, t in enumerate(grid)}
    states, covs = [], []
    for tq in q:
        j = at.get(float(tq))
        if j is not None:
            states.append(xs[j])
            covs.append(Ps[j])
        else:
            # before the first observation: propagate the first state backwards
            dt = tq - t_first
            xb, F = model.predict(xs[0], dt)
            states.append(xb)
            covs.append(F @ Ps[0] @ F.T + model.Q(dt))

    st = np.array(states)
    lat, lon = lat_lon_arrays(origin, st[:, 0], st[:, 1])
    estimates = []
    for tq, s, la, lo in zip(q, st, lat, lon):
        tas, trk, vs = model.velocity(s)
        estimates.append(make_sample(tq, la, lo, alt0 + s[2], tas, vs, trk))
    inside = (q >= t_first) & (q <= t_last)
    return ReconstructionResult(
        estimates,
        [MEASURED if ok else EXTRAPOLATED for ok in inside],
        {"method": "kalman_rts" if cfg.smoother else "kalman", "model": cfg.model, "n_points": len(points)},
        [float(math.sqrt(max(0.0, c[0, 0] + c[1, 1]))) for c in covs],
    )
