"""Geodetic points and the small-area local ENU approximation."""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float
    altitude: float = 0.0

    def flyable(self) -> bool:
        return abs(self.latitude) <= 90 and abs(self.longitude) <= 180 and self.altitude >= 0

    def with_altitude(self, altitude: float) -> GeoPoint:
        return GeoPoint(self.latitude, self.longitude, altitude)


def enu_offset(origin: GeoPoint, target: GeoPoint) -> tuple[float, float, float]:
    """Equirectangular (east, north, up) metres from ``origin`` to ``target``."""
    k = math.pi / 180.0 * EARTH_RADIUS_M
    north = (target.latitude - origin.latitude) * k
    east = (target.longitude - origin.longitude) * k * math.cos(math.radians(origin.latitude))
    return east, north, target.altitude - origin.altitude


def offset_point(origin: GeoPoint, east: float, north: float, up: float = 0.0) -> GeoPoint:
    """Inverse of :func:`enu_offset` about ``origin``."""
    k = math.pi / 180.0 * EARTH_RADIUS_M
    lat = origin.latitude + north / k
    lon = origin.longitude + east / (k * math.cos(math.radians(origin.latitude)))
    return GeoPoint(lat, lon, origin.altitude + up)


def horizontal_distance(a: GeoPoint, b: GeoPoint) -> float:
    e, n, _ = enu_offset(a, b)
    return math.hypot(e, n)


def distance(a: GeoPoint, b: GeoPoint) -> float:
    e, n, u = enu_offset(a, b)
    return math.sqrt(e * e + n * n + u * u)
