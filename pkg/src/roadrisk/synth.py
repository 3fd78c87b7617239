"""Deterministic synthetic world: roads, stations, hourly weather, incidents.

Everything is driven by one DetRng stream in a fixed draw order, so a seed
pins every output byte. Incidents follow an hourly regional rate (base rate
times a rain multiplier times an hour-of-week profile) and land on road
polylines with 15 m lateral noise; planted hot cells receive a rate
multiplier, so the trained models have real spatial, temporal, and weather
signal to find.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from datetime import timedelta

from .cellgrid import GridSpec, cell_of, parse_token
from .common import DetRng, RoadRiskError, format_rfc3339, from_epoch_hour, to_epoch_hour
from .geo import METERS_PER_DEG, BBox, GeoPoint, interpolate
from datetime import datetime, timezone


class WorldError(RoadRiskError):
    code = "WORLD_INVALID"


@dataclass
class WorldSpec:
    """Knobs for the generator.

    base_rate is the regional expected incident count per dry, profile-1
    hour; hot cells redistribute where incidents land (weight multiplier),
    and the rain multiplier scales the hourly rate when the region is wet.
    """
    seed: int = 42
    bbox: tuple = (39.0, -76.5, 40.2, -74.9)  # min_lat, min_lon, max_lat, max_lon
    n_roads: int = 200
    road_len_km: tuple = (2.0, 12.0)
    n_stations: int = 5
    years: tuple = (2018, 2021)
    base_rate: float = 0.25
    n_hot: int = 3
    hot_multiplier: float = 10.0
    hot_cells: list = field(default_factory=list)  # explicit [token, multiplier] pairs
    rain_multiplier: float = 3.0
    grid_resolution_deg: float = 0.2

    def validate(self):
        min_lat, min_lon, max_lat, max_lon = self.bbox
        if not (min_lat < max_lat and min_lon < max_lon):
            raise WorldError("empty bbox")
        if self.base_rate <= 0:
            raise WorldError("base_rate must be positive")
        if self.rain_multiplier < 1 or self.hot_multiplier < 1:
            raise WorldError("multipliers must be >= 1")
        for _, mult in self.hot_cells:
            if mult < 1:
                raise WorldError("multipliers must be >= 1")
        if self.years[1] < self.years[0]:
            raise WorldError("bad year range")
        if self.n_roads < 1 or self.n_stations < 1:
            raise WorldError("need at least one road and one station")

    def to_json(self):
        return {
            "seed": self.seed, "bbox": list(self.bbox), "n_roads": self.n_roads,
            "road_len_km": list(self.road_len_km), "n_stations": self.n_stations,
            "years": list(self.years), "base_rate": self.base_rate,
            "n_hot": self.n_hot, "hot_multiplier": self.hot_multiplier,
            "hot_cells": [list(pair) for pair in self.hot_cells],
            "rain_multiplier": self.rain_multiplier,
            "grid_resolution_deg": self.grid_resolution_deg,
        }

    @classmethod
    def from_json(cls, data):
        spec = cls()
        for key, value in data.items():
            if not hasattr(spec, key):
                raise WorldError(f"unknown world spec field {key!r}")
            if key in ("bbox", "road_len_km", "years"):
                value = tuple(value)
            setattr(spec, key, value)
        spec.validate()
        return spec


# hour-of-week incident rate profile: weekday rush peaks, flatter weekends
def _how_profile():
    prof = []
    for dow in range(7):
        for hour in range(24):
            if dow < 5:
                v = (0.6 + 0.9 * math.exp(-((hour - 8.0) / 2.5) ** 2)
                     + 1.1 * math.exp(-((hour - 17.0) / 3.0) ** 2))
            else:
                v = 0.7 + 0.6 * math.exp(-((hour - 14.0) / 4.0) ** 2)
            prof.append(v)
    return prof


HOW_PROFILE = _how_profile()

# regional wet-spell Markov chain
P_WET_GIVEN_WET = 0.65
P_WET_GIVEN_DRY = 0.06

SEVERITY_CUM = [(1, 0.15), (2, 0.50), (3, 0.85), (4, 1.0)]

LATERAL_SIGMA_M = 15.0
POOL_STEP_M = 50.0


def _wchoice(rng, cum_pairs):
    u = rng.uniform()
    for value, cum in cum_pairs:
        if u <= cum:
            return value
    return cum_pairs[-1][0]


def _gen_roads(rng, spec):
    min_lat, min_lon, max_lat, max_lon = spec.bbox
    margin_lat = (max_lat - min_lat) * 0.05
    margin_lon = (max_lon - min_lon) * 0.05
    roads = []
    for i in range(spec.n_roads):
        lat = rng.uniform_in(min_lat + margin_lat, max_lat - margin_lat)
        lon = rng.uniform_in(min_lon + margin_lon, max_lon - margin_lon)
        heading = rng.uniform_in(0.0, 2.0 * math.pi)
        length_m = rng.uniform_in(spec.road_len_km[0], spec.road_len_km[1]) * 1000.0
        step = 250.0
        pts = [GeoPoint(lat, lon)]
        walked = 0.0
        while walked < length_m:
            heading += rng.normal(0.0, 0.15)
            dlat = step * math.cos(heading) / METERS_PER_DEG
            dlon = step * math.sin(heading) / (METERS_PER_DEG * math.cos(math.radians(lat)))
            nlat, nlon = lat + dlat, lon + dlon
            # bounce off the box edges
            if not (min_lat <= nlat <= max_lat):
                heading = -heading
                continue
            if not (min_lon <= nlon <= max_lon):
                heading = math.pi - heading
                continue
            lat, lon = nlat, nlon
            pts.append(GeoPoint(lat, lon))
            walked += step
        u = rng.uniform()
        cls = "primary" if u < 0.2 else ("secondary" if u < 0.5 else "other")
        roads.append({"road_id": f"RD{i:04d}", "class": cls,
                      "coords": [[p.lon, p.lat] for p in pts]})
    return roads


def _gen_stations(rng, spec):
    min_lat, min_lon, max_lat, max_lon = spec.bbox
    stations = []
    for i in range(spec.n_stations):
        lat = rng.uniform_in(min_lat, max_lat)
        lon = rng.uniform_in(min_lon, max_lon)
        stations.append({"station_id": f"ST{i:02d}", "lat": lat, "lon": lon,
                         "name": f"Synthetic Station {i}"})
    return stations


def _season_temp(at):
    doy = at.timetuple().tm_yday
    seasonal = 12.0 - 11.0 * math.cos(2.0 * math.pi * (doy - 15.0) / 365.25)
    diurnal = -5.0 * math.cos(2.0 * math.pi * at.hour / 24.0)
    return seasonal + diurnal


def _gen_weather(rng, spec, hours):
    """Returns (rows, wet_series). One regional wet state shared by stations."""
    offsets = [rng.normal(0.0, 1.0) for _ in range(spec.n_stations)]
    wet = False
    wet_series = []
    rows = []
    for h in hours:
        at = from_epoch_hour(h)
        p = P_WET_GIVEN_WET if wet else P_WET_GIVEN_DRY
        wet = rng.uniform() < p
        wet_series.append(wet)
        base_t = _season_temp(at)
        for i in range(spec.n_stations):
            temp = base_t + offsets[i] + rng.normal(0.0, 1.5)
            spread = rng.uniform_in(1.0, 8.0) * (0.3 if wet else 1.0)
            dew = temp - spread
            rh = min(1.0, max(0.05, 1.0 - spread / 20.0 + rng.normal(0.0, 0.03)))
            wind = min(50.0, abs(rng.normal(3.0, 2.0)) + (2.0 if wet else 0.0))
            precip = rng.uniform_in(0.2, 4.0) if wet else 0.0
            rows.append((f"ST{i:02d}", at, temp, dew, rh, wind, precip))
    return rows, wet_series


def _road_point_pool(roads, grid):
    """Points every ~50 m along every road, tagged with their cell."""
    pool = []
    for road in roads:
        pts = [GeoPoint(lat, lon) for lon, lat in road["coords"]]
        for a, b in zip(pts, pts[1:]):
            # spans are ~250 m; plant interior samples along each
            span_m = 250.0
            n = max(1, int(span_m / POOL_STEP_M))
            for i in range(n):
                p = interpolate(a, b, i / n)
                pool.append((p, cell_of(p, grid)))
    return pool


def _plant_hot_cells(spec, pool, grid):
    """Explicit hot cells if given, else the n_hot cells richest in road points."""
    if spec.hot_cells:
        return {parse_token(token): float(mult) for token, mult in spec.hot_cells}
    counts = {}
    for _, cell in pool:
        counts[cell] = counts.get(cell, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return {cell: spec.hot_multiplier for cell, _ in ranked[: spec.n_hot]}


def _gen_incidents(rng, spec, pool, hot, wet_series, hours):
    weights = []
    for _, cell in pool:
        weights.append(hot.get(cell, 1.0))
    cum = []
    total = 0.0
    for w in weights:
        total += w
        cum.append(total)
    mean_weight = total / len(weights)
    incidents = []
    n = 0
    for pos, h in enumerate(hours):
        at = from_epoch_hour(h)
        how = at.weekday() * 24 + at.hour
        rate = spec.base_rate * HOW_PROFILE[how]
        if wet_series[pos]:
            rate *= spec.rain_multiplier
        for _ in range(rng.poisson(rate)):
            idx = rng.sample_weighted(cum)
            p, _ = pool[idx]
            north = rng.normal(0.0, LATERAL_SIGMA_M)
            east = rng.normal(0.0, LATERAL_SIGMA_M)
            lat = p.lat + north / METERS_PER_DEG
            lon = p.lon + east / (METERS_PER_DEG * math.cos(math.radians(p.lat)))
            minute = rng.randint(60)
            severity = _wchoice(rng, SEVERITY_CUM)
            source = "synth-a" if rng.uniform() < 0.5 else "synth-b"
            incidents.append({
                "id": f"INC{n:06d}",
                "at": at + timedelta(minutes=minute),
                "lat": lat, "lon": lon,
                "severity": severity, "source": source,
            })
            n += 1
    return incidents, mean_weight


def generate(spec: WorldSpec, out_dir):
    """Write roads.ndjson, stations.csv, weather.csv, incidents.csv.

    Returns a summary dict with counts, the planted hot cells, and per-cell
    road-point totals (for rate-ratio checks).
    """
    spec.validate()
    os.makedirs(out_dir, exist_ok=True)
    grid = GridSpec(spec.grid_resolution_deg)
    rng = DetRng(spec.seed)

    roads = _gen_roads(rng, spec)
    stations = _gen_stations(rng, spec)

    start = datetime(spec.years[0], 1, 1, tzinfo=timezone.utc)
    end = datetime(spec.years[1], 12, 31, 23, 0, tzinfo=timezone.utc)
    hours = list(range(to_epoch_hour(start), to_epoch_hour(end) + 1))

    weather, wet_series = _gen_weather(rng, spec, hours)
    pool = _road_point_pool(roads, grid)
    hot = _plant_hot_cells(spec, pool, grid)
    incidents, _ = _gen_incidents(rng, spec, pool, hot, wet_series, hours)

    roads_path = os.path.join(out_dir, "roads.ndjson")
    with open(roads_path, "w", encoding="utf-8") as fh:
        for road in roads:
            coords = [[round(lon, 6), round(lat, 6)] for lon, lat in road["coords"]]
            fh.write(json.dumps({"road_id": road["road_id"], "class": road["class"],
                                 "coords": coords}) + "\n")

    stations_path = os.path.join(out_dir, "stations.csv")
    with open(stations_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("station_id,lat,lon,name\n")
        for s in stations:
            fh.write(f"{s['station_id']},{s['lat']:.6f},{s['lon']:.6f},{s['name']}\n")

    weather_path = os.path.join(out_dir, "weather.csv")
    with open(weather_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("station_id,timestamp_utc,temp_tenths_c,dewpoint_tenths_c,"
                 "rh_tenths_pct,wind_tenths_ms,precip_tenths_mm\n")
        for sid, at, temp, dew, rh, wind, precip in weather:
            precip_t = max(1, round(precip * 10)) if precip > 0 else 0
            fh.write(f"{sid},{format_rfc3339(at)},{round(temp * 10)},{round(dew * 10)},"
                     f"{round(rh * 1000)},{round(wind * 10)},{precip_t}\n")

    incidents_path = os.path.join(out_dir, "incidents.csv")
    with open(incidents_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("id,timestamp_utc,lat,lon,severity,source\n")
        for inc in incidents:
            fh.write(f"{inc['id']},{format_rfc3339(inc['at'])},{inc['lat']:.6f},"
                     f"{inc['lon']:.6f},{inc['severity']},{inc['source']}\n")

    cell_points = {}
    for _, cell in pool:
        cell_points[cell.token()] = cell_points.get(cell.token(), 0) + 1
    return {
        "files": {"roads": roads_path, "stations": stations_path,
                  "weather": weather_path, "incidents": incidents_path},
        "n_roads": len(roads),
        "n_stations": len(stations),
        "n_weather_rows": len(weather),
        "n_incidents": len(incidents),
        "hot_cells": {cell.token(): mult for cell, mult in sorted(hot.items())},
        "cell_points": cell_points,
        "wet_hours": sum(1 for w in wet_series if w),
        "total_hours": len(hours),
    }
