"""Geographic primitives: points, polygons, great-circle distance and
point-in-polygon tests.

Polygons are tested in the raw (latitude, longitude) plane; at city scale the
spherical distortion is negligible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0

__all__ = [
    "EARTH_RADIUS_M",
    "GeoPoint",
    "GeoPolygon",
    "haversine_distance",
    "haversine_array",
    "point_in_polygon",
    "point_in_ring",
    "destination_point",
]


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float

    def __post_init__(self):
        lat, lon = float(self.latitude), float(self.longitude)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinates ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise ValueError(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "latitude", lat)
        object.__setattr__(self, "longitude", lon)


def _as_ring(vertices) -> tuple[tuple[float, float], ...]:
    ring = []
    for v in vertices:
        if isinstance(v, GeoPoint):
            ring.append((v.latitude, v.longitude))
        else:
            lat, lon = v
            GeoPoint(lat, lon)
            ring.append((float(lat), float(lon)))
    # closure is logical only
    if len(ring) > 1 and ring[0] == ring[-1]:
        ring.pop()
    if len(ring) < 3:
        raise ValueError(f"polygon ring needs at least 3 vertices, got {len(ring)}")
    return tuple(ring)


@dataclass(frozen=True)
class GeoPolygon:
    """Polygon with an exterior ring and optional holes.

    Rings are stored as tuples of ``(lat, lon)`` pairs without repeating the
    first vertex. Construction accepts either ``GeoPoint`` instances or pairs.
    """

    exterior: tuple
    holes: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "exterior", _as_ring(self.exterior))
        object.__setattr__(self, "holes", tuple(_as_ring(h) for h in self.holes))
        lats = [v[0] for v in self.exterior]
        lons = [v[1] for v in self.exterior]
        object.__setattr__(self, "_bbox", (min(lats), min(lons), max(lats), max(lons)))

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        """``(min_lat, min_lon, max_lat, max_lon)`` of the exterior ring."""
        return self._bbox

    def in_bbox(self, p: GeoPoint) -> bool:
        lat0, lon0, lat1, lon1 = self._bbox
        return lat0 <= p.latitude <= lat1 and lon0 <= p.longitude <= lon1


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of mean Earth radius."""
    phi1 = math.radians(a.latitude)
    phi2 = math.radians(b.latitude)
    dphi = phi2 - phi1
    dlmb = math.radians(b.longitude) - math.radians(a.longitude)
    # |dphi| and |dlmb| make the result bitwise symmetric in (a, b)
    s = math.sin(abs(dphi) / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(abs(dlmb) / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(s)))


def haversine_array(lat: float, lon: float, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Vectorized great-circle distances from one point to many, in meters."""
    phi1 = math.radians(lat)
    phi2 = np.radians(lats)
    dphi = np.abs(phi2 - phi1)
    dlmb = np.abs(np.radians(lons) - math.radians(lon))
    s = np.sin(dphi / 2.0) ** 2 + math.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(s)))


def destination_point(origin: GeoPoint, bearing_deg: float, distance_m: float) -> GeoPoint:
    """Point reached travelling ``distance_m`` along a great circle."""
    delta = distance_m / EARTH_RADIUS_M
    theta = math.radians(bearing_deg)
    phi1 = math.radians(origin.latitude)
    lmb1 = math.radians(origin.longitude)
    phi2 = math.asin(math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta))
    lmb2 = lmb1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    lon = (math.degrees(lmb2) + 540.0) % 360.0 - 180.0
    return GeoPoint(math.degrees(phi2), lon)


def _on_segment(py, px, ay, ax, by, bx) -> bool:
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if cross != 0.0:
        return False
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def point_in_ring(lat: float, lon: float, ring: Sequence[tuple[float, float]]) -> int:
    """Even-odd test of one ring.

    Returns 1 inside, 0 outside and -1 when the point lies on an edge.
    Latitude plays the role of y and longitude of x.
    """
    inside = False
    n = len(ring)
    j = n - 1
    for i in range(n):
        yi, xi = ring[i]
        yj, xj = ring[j]
        if _on_segment(lat, lon, yi, xi, yj, xj):
            return -1
        if (yi > lat) != (yj > lat):
            x_cross = xj + (lat - yj) * (xi - xj) / (yi - yj)
            if lon < x_cross:
                inside = not inside
        j = i
    return 1 if inside else 0


def point_in_polygon(p: GeoPoint, poly: GeoPolygon) -> bool:
    """True iff ``p`` is inside the exterior ring and outside every hole.

    Points on the exterior boundary count as inside; points on a hole
    boundary belong to the polygon as well.
    """
    if not poly.in_bbox(p):
        return False
    state = point_in_ring(p.latitude, p.longitude, poly.exterior)
    if state == 0:
        return False
    if state == -1:
        return True
    for hole in poly.holes:
        h = point_in_ring(p.latitude, p.longitude, hole)
        if h == 1:
            return False
    return True
