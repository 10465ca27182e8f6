"""Spherical-earth geodesy helpers.

Everything works on a sphere of radius ``EARTH_RADIUS_M``. Altitudes stay in
feet throughout the package; only horizontal offsets are metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoincidentPointsError, OutOfLocalRangeError

EARTH_RADIUS_M = 6_371_000.0
KT_TO_MS = 0.514444
LOCAL_RANGE_DEG = 5.0


def wrap_lon(lon_deg: float) -> float:
    """Wrap a longitude into [-180, 180)."""
    return (lon_deg + 180.0) % 360.0 - 180.0


def wrap_angle(deg: float) -> float:
    """Wrap an angle difference into [-180, 180)."""
    return (deg + 180.0) % 360.0 - 180.0


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float

    def __post_init__(self) -> None:
        if not (-90.0 <= self.lat_deg <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat_deg}")
        if not (-180.0 <= self.lon_deg < 180.0):
            raise ValueError(f"longitude out of range: {self.lon_deg}")


@dataclass(frozen=True, slots=True)
class EnuVector:
    east_m: float
    north_m: float
    up_ft: float


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters."""
    lat1, lat2 = math.radians(a.lat_deg), math.radians(b.lat_deg)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon_deg - a.lon_deg)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_array(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorised :func:`haversine_distance` over degree arrays."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=float)) for x in (lat1, lon1, lat2, lon2))
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def initial_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Forward azimuth from ``a`` to ``b`` in degrees, [0, 360).

    Raises:
        CoincidentPointsError: if ``a`` and ``b`` are the same point.
    """
    if a == b:
        raise CoincidentPointsError(f"bearing undefined for coincident points {a}")
    lat1, lat2 = math.radians(a.lat_deg), math.radians(b.lat_deg)
    dlon = math.radians(b.lon_deg - a.lon_deg)
    y = math.sin(dlon) * math.cos(lat2)
    x = math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(dlon)
    brg = math.degrees(math.atan2(y, x)) % 360.0
    # -0.0 % 360 and tiny negatives round up to 360.0
    return 0.0 if brg >= 360.0 else brg


def project_forward(a: GeoPoint, bearing_deg: float, distance_m: float) -> GeoPoint:
    """Destination reached by travelling ``distance_m`` along a great circle."""
    if distance_m < 0:
        raise ValueError("distance must be non-negative")
    if distance_m == 0:
        return a
    lat1, lon1 = math.radians(a.lat_deg), math.radians(a.lon_deg)
    brg = math.radians(bearing_deg)
    d = distance_m / EARTH_RADIUS_M
    sin_lat2 = math.sin(lat1) * math.cos(d) + math.cos(lat1) * math.sin(d) * math.cos(brg)
    lat2 = math.asin(max(-1.0, min(1.0, sin_lat2)))
    lon2 = lon1 + math.atan2(
        math.sin(brg) * math.sin(d) * math.cos(lat1),
        math.cos(d) - math.sin(lat1) * sin_lat2,
    )
    return GeoPoint(math.degrees(lat2), wrap_lon(math.degrees(lon2)))


def _check_local(origin: GeoPoint, lat_deg: float, lon_deg: float) -> None:
    if (
        abs(lat_deg - origin.lat_deg) > LOCAL_RANGE_DEG
        or abs(wrap_angle(lon_deg - origin.lon_deg)) > LOCAL_RANGE_DEG
    ):
        raise OutOfLocalRangeError(
            f"({lat_deg}, {lon_deg}) is more than {LOCAL_RANGE_DEG} deg from {origin}"
        )


def to_enu(origin: GeoPoint, p: GeoPoint, alt_ft: float = 0.0, origin_alt_ft: float = 0.0) -> EnuVector:
    """Equirectangular east/north offset of ``p`` from ``origin``, altitude in feet."""
    _check_local(origin, p.lat_deg, p.lon_deg)
    k = math.radians(EARTH_RADIUS_M)
    east = wrap_angle(p.lon_deg - origin.lon_deg) * k * math.cos(math.radians(origin.lat_deg))
    north = (p.lat_deg - origin.lat_deg) * k
    return EnuVector(east, north, alt_ft - origin_alt_ft)


def from_enu(origin: GeoPoint, v: EnuVector, origin_alt_ft: float = 0.0) -> tuple[GeoPoint, float]:
    """Inverse of :func:`to_enu`; returns the point and its altitude in feet."""
    k = math.radians(EARTH_RADIUS_M)
    lat = origin.lat_deg + v.north_m / k
    lon = origin.lon_deg + v.east_m / (k * math.cos(math.radians(origin.lat_deg)))
    _check_local(origin, lat, lon)
    return GeoPoint(lat, wrap_lon(lon)), v.up_ft + origin_alt_ft


def enu_arrays(origin: GeoPoint, lat, lon) -> tuple[np.ndarray, np.ndarray]:
    """Array form of the horizontal part of :func:`to_enu`."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if lat.size and (
        np.max(np.abs(lat - origin.lat_deg)) > LOCAL_RANGE_DEG
        or np.max(np.abs((lon - origin.lon_deg + 180.0) % 360.0 - 180.0)) > LOCAL_RANGE_DEG
    ):
        raise OutOfLocalRangeError(f"points more than {LOCAL_RANGE_DEG} deg from {origin}")
    k = math.radians(EARTH_RADIUS_M)
    east = ((lon - origin.lon_deg + 180.0) % 360.0 - 180.0) * k * math.cos(math.radians(origin.lat_deg))
    north = (lat - origin.lat_deg) * k
    return east, north


def lat_lon_arrays(origin: GeoPoint, east, north) -> tuple[np.ndarray, np.ndarray]:
    """Array form of the horizontal part of :func:`from_enu`."""
    k = math.radians(EARTH_RADIUS_M)
    lat = origin.lat_deg + np.asarray(north, dtype=float) / k
    lon = origin.lon_deg + np.asarray(east, dtype=float) / (k * math.cos(math.radians(origin.lat_deg)))
    return lat, (lon + 180.0) % 360.0 - 180.0
