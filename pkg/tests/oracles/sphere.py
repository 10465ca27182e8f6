"""Brute-force spherical geometry built on 3-D unit vectors.

Deliberately avoids the haversine / atan2-bearing formulae used by the
library so the two routes can be compared.
"""

import math

R = 6_371_000.0


def unit(lat, lon):
    la, lo = math.radians(lat), math.radians(lon)
    return (math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la))


def cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def norm(a):
    return math.sqrt(dot(a, a))


def distance(lat1, lon1, lat2, lon2):
    u, v = unit(lat1, lon1), unit(lat2, lon2)
    return R * math.atan2(norm(cross(u, v)), dot(u, v))


def bearing(lat1, lon1, lat2, lon2):
    u, v = unit(lat1, lon1), unit(lat2, lon2)
    pole = (0.0, 0.0, 1.0)
    east = cross(pole, u)
    east = tuple(c / norm(east) for c in east)
    north = cross(u, east)
    # direction of the great circle at u, towards v
    d = cross(cross(u, v), u)
    ang = math.degrees(math.atan2(dot(d, east), dot(d, north)))
    return ang % 360.0


def destination(lat, lon, bearing_deg, dist_m):
    u = unit(lat, lon)
    pole = (0.0, 0.0, 1.0)
    east = cross(pole, u)
    east = tuple(c / norm(east) for c in east)
    north = cross(u, east)
    b = math.radians(bearing_deg)
    t = tuple(math.cos(b) * n + math.sin(b) * e for n, e in zip(north, east))
    d = dist_m / R
    p = tuple(math.cos(d) * a + math.sin(d) * c for a, c in zip(u, t))
    return math.degrees(math.asin(p[2])), math.degrees(math.atan2(p[1], p[0]))
