"""Spherical geometry and Web Mercator tile math.

All distances use a spherical Earth with mean radius R = 6,371,008.8 m.
Point-to-polyline distances run in a local equirectangular projection
centered on the query point, which is cheap, deterministic, and accurate to
well under 0.5% at road-matching scales (sub-5 km).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6_371_008.8
METERS_PER_DEG = math.pi * EARTH_RADIUS_M / 180.0

# Web Mercator latitude limit: atan(sinh(pi)) in degrees.
MERCATOR_MAX_LAT = 85.05113
MAX_ZOOM = 22


def normalize_lon(lon: float) -> float:
    """Wrap longitude into [-180, 180)."""
    lon = math.fmod(lon + 180.0, 360.0)
    if lon < 0:
        lon += 360.0
    return lon - 180.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon < 180.0:
            object.__setattr__(self, "lon", normalize_lon(self.lon))


@dataclass(frozen=True)
class BBox:
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self):
        if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
            raise ValueError("bbox min exceeds max")

    def contains(self, p: GeoPoint) -> bool:
        return (self.min_lat <= p.lat <= self.max_lat
                and self.min_lon <= p.lon <= self.max_lon)

    def intersects(self, other: "BBox") -> bool:
        return not (self.max_lat < other.min_lat or self.min_lat > other.max_lat
                    or self.max_lon < other.min_lon or self.min_lon > other.max_lon)


class Polyline:
    """Ordered lat/lon path with at least two vertices.

    Consecutive duplicate vertices are allowed and contribute zero length.
    Vertex arrays are cached as numpy for the distance kernel.
    """

    __slots__ = ("points", "lats", "lons")

    def __init__(self, points):
        pts = list(points)
        if len(pts) < 2:
            raise ValueError("polyline needs at least 2 points")
        self.points = pts
        self.lats = np.array([p.lat for p in pts], dtype=np.float64)
        self.lons = np.array([p.lon for p in pts], dtype=np.float64)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, Polyline) and self.points == other.points

    def bbox(self) -> BBox:
        return BBox(float(self.lats.min()), float(self.lons.min()),
                    float(self.lats.max()), float(self.lons.max()))

    def coords(self):
        """[[lon, lat], ...] pairs, the NDJSON wire order."""
        return [[p.lon, p.lat] for p in self.points]


@dataclass(frozen=True)
class TileCoord:
    z: int
    x: int
    y: int

    def __post_init__(self):
        if self.z < 0:
            raise ValueError("zoom must be >= 0")
        n = 1 << self.z
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise ValueError(f"tile indices out of range for z={self.z}: ({self.x}, {self.y})")


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    s = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return EARTH_RADIUS_M * 2.0 * math.asin(min(1.0, math.sqrt(s)))


def polyline_length_m(p: Polyline) -> float:
    total = 0.0
    for a, b in zip(p.points, p.points[1:]):
        total += haversine_m(a, b)
    return total


def span_distances_m(qlat, qlon, cos_lat, lat0, lon0, lat1, lon1):
    """Distance in meters from a query point to each span, vectorized.

    Local equirectangular frame centered at the query point:
    x = dlon * cos(lat_q), y = dlat, both scaled to meters. The perpendicular
    foot is clamped to the span. Every matching path (single polyline, index
    candidates, brute force) funnels through this one kernel so results are
    bit-identical regardless of how spans were batched.
    """
    x0 = (lon0 - qlon) * cos_lat * METERS_PER_DEG
    y0 = (lat0 - qlat) * METERS_PER_DEG
    x1 = (lon1 - qlon) * cos_lat * METERS_PER_DEG
    y1 = (lat1 - qlat) * METERS_PER_DEG
    dx = x1 - x0
    dy = y1 - y0
    seg_sq = dx * dx + dy * dy
    # Degenerate spans (duplicate vertices) keep t = 0.
    t = np.where(seg_sq > 0.0, -(x0 * dx + y0 * dy) / np.where(seg_sq > 0.0, seg_sq, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    fx = x0 + t * dx
    fy = y0 + t * dy
    return np.sqrt(fx * fx + fy * fy)


def point_to_polyline_m(q: GeoPoint, p: Polyline):
    """(distance_m, span_index) of the nearest span; ties go to the lowest index."""
    cos_lat = math.cos(math.radians(q.lat))
    d = span_distances_m(q.lat, q.lon, cos_lat,
                         p.lats[:-1], p.lons[:-1], p.lats[1:], p.lons[1:])
    idx = int(np.argmin(d))  # argmin returns the first minimum
    return float(d[idx]), idx


def bearing_deg(a: GeoPoint, b: GeoPoint):
    """(initial great-circle bearing in [0, 360), degenerate flag).

    0 = north, 90 = east. Coincident points return (0.0, True) by convention.
    """
    if a.lat == b.lat and a.lon == b.lon:
        return 0.0, True
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlam = math.radians(b.lon - a.lon)
    y = math.sin(dlam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    deg = math.degrees(math.atan2(y, x)) % 360.0
    return deg, False


def tile_for(q: GeoPoint, z: int):
    """(TileCoord, clamped flag) for the slippy tile containing q.

    Latitudes beyond the Web Mercator limit are clamped and flagged rather
    than rejected.
    """
    if not 0 <= z <= MAX_ZOOM:
        raise ValueError(f"zoom out of range: {z}")
    lat = q.lat
    clamped = False
    if lat > MERCATOR_MAX_LAT:
        lat, clamped = MERCATOR_MAX_LAT, True
    elif lat < -MERCATOR_MAX_LAT:
        lat, clamped = -MERCATOR_MAX_LAT, True
    n = 1 << z
    x = int((q.lon + 180.0) / 360.0 * n)
    phi = math.radians(lat)
    ynorm = (1.0 - math.asinh(math.tan(phi)) / math.pi) / 2.0
    y = int(ynorm * n)
    x = min(max(x, 0), n - 1)
    y = min(max(y, 0), n - 1)
    return TileCoord(z, x, y), clamped


def tile_bounds(t: TileCoord) -> BBox:
    n = 1 << t.z
    lon_w = t.x / n * 360.0 - 180.0
    lon_e = (t.x + 1) / n * 360.0 - 180.0
    lat_n = math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * t.y / n))))
    lat_s = math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * (t.y + 1) / n))))
    return BBox(lat_s, lon_w, lat_n, lon_e)


def tile_center(t: TileCoord) -> GeoPoint:
    b = tile_bounds(t)
    return GeoPoint((b.min_lat + b.max_lat) / 2.0, (b.min_lon + b.max_lon) / 2.0)


def interpolate(a: GeoPoint, b: GeoPoint, frac: float) -> GeoPoint:
    """Linear interpolation in lat/lon; adequate for the short spans used here."""
    return GeoPoint(a.lat + (b.lat - a.lat) * frac, a.lon + (b.lon - a.lon) * frac)
