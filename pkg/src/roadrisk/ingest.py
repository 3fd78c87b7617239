"""Readers and cleaners for the incident, weather, station, and road files.

Formats are deliberately plain: headered CSV for incidents, stations, and
weather (ISD-Lite-style tenths scaling with -9999 sentinels), and
newline-delimited JSON for road geometry. Every input line either becomes
a record or shows up in the rejection report, so kept + rejected always
equals the input size.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime

from .cellgrid import GridSpec, cell_center
from .common import RoadRiskError, format_rfc3339, parse_rfc3339
from .geo import GeoPoint, Polyline, haversine_m


class InputError(RoadRiskError):
    code = "INPUT_INVALID"


@dataclass(frozen=True)
class IncidentRecord:
    id: str
    at: datetime
    loc: GeoPoint
    severity: int
    source: str


@dataclass(frozen=True)
class Station:
    id: str
    loc: GeoPoint
    name: str


@dataclass(frozen=True)
class WeatherHour:
    station_id: str
    at: datetime
    temp_c: float | None
    dewpoint_c: float | None
    rel_humidity: float | None
    wind_ms: float | None
    precip_mm: float | None


ROAD_CLASSES = ("primary", "secondary", "other")


@dataclass(frozen=True)
class RoadFeature:
    road_id: str
    road_class: str
    geometry: Polyline


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str


INCIDENT_HEADER = ["id", "timestamp_utc", "lat", "lon", "severity", "source"]
WEATHER_HEADER = ["station_id", "timestamp_utc", "temp_tenths_c", "dewpoint_tenths_c",
                  "rh_tenths_pct", "wind_tenths_ms", "precip_tenths_mm"]
STATION_HEADER = ["station_id", "lat", "lon", "name"]

DEFAULT_RULES = frozenset({"null_island", "coord_range", "year_range", "duplicate_id"})

SENTINEL = "-9999"


def _read_csv(path, expected_header):
    """Yield (line_no, row) after validating the header. Fatal on mismatch."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot open {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, expected header {','.join(expected_header)}")
        if header != expected_header:
            raise InputError(f"{path}: bad header {header!r}, expected {expected_header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            yield line_no, row


def _coord_or_reason(lat_text, lon_text):
    """Parse a raw lat/lon pair; returns (GeoPoint, None) or (None, reason)."""
    try:
        lat = float(lat_text)
        lon = float(lon_text)
    except ValueError:
        return None, "bad coordinate"
    if not (math.isfinite(lat) and math.isfinite(lon)):
        return None, "bad coordinate"
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        return None, "coordinate out of range"
    return GeoPoint(lat, lon), None


def parse_incidents(path, years=None, rules=DEFAULT_RULES):
    """Parse incidents.csv into (records, rejections).

    years: optional (first, last) inclusive year bounds for the year_range rule.
    Cleaning rules run inline so the rejection report carries line numbers.
    """
    records = []
    rejections = []
    seen_ids = set()
    for line_no, row in _read_csv(path, INCIDENT_HEADER):
        if len(row) != len(INCIDENT_HEADER):
            rejections.append(Rejection(line_no, "wrong column count"))
            continue
        rid, ts, lat, lon, sev, source = row
        if not rid:
            rejections.append(Rejection(line_no, "empty id"))
            continue
        try:
            at = parse_rfc3339(ts)
        except ValueError:
            rejections.append(Rejection(line_no, "bad timestamp"))
            continue
        loc, reason = _coord_or_reason(lat, lon)
        if reason == "bad coordinate":
            rejections.append(Rejection(line_no, reason))
            continue
        if reason and "coord_range" in rules:
            rejections.append(Rejection(line_no, reason))
            continue
        if reason:
            # rule disabled but the point is still unusable
            rejections.append(Rejection(line_no, "bad coordinate"))
            continue
        try:
            severity = int(sev)
        except ValueError:
            severity = -1
        if severity not in (1, 2, 3, 4):
            rejections.append(Rejection(line_no, "bad severity"))
            continue
        if "null_island" in rules and loc.lat == 0.0 and loc.lon == 0.0:
            rejections.append(Rejection(line_no, "null island"))
            continue
        if years is not None and "year_range" in rules and not (years[0] <= at.year <= years[1]):
            rejections.append(Rejection(line_no, "outside year range"))
            continue
        if "duplicate_id" in rules and rid in seen_ids:
            rejections.append(Rejection(line_no, "duplicate"))
            continue
        seen_ids.add(rid)
        records.append(IncidentRecord(rid, at, loc, severity, source))
    return records, rejections


def clean_incidents(records, years=None, rules=DEFAULT_RULES):
    """Apply the cleaning rules to already-parsed records.

    Returns (kept, counts) where counts maps drop reason to count.
    kept + sum(counts.values()) == len(records).
    """
    kept = []
    counts: dict[str, int] = {}
    seen = set()

    def drop(reason):
        counts[reason] = counts.get(reason, 0) + 1

    for rec in records:
        if "null_island" in rules and rec.loc.lat == 0.0 and rec.loc.lon == 0.0:
            drop("null island")
            continue
        if years is not None and "year_range" in rules and not (years[0] <= rec.at.year <= years[1]):
            drop("outside year range")
            continue
        if "duplicate_id" in rules and rec.id in seen:
            drop("duplicate")
            continue
        seen.add(rec.id)
        kept.append(rec)
    return kept, counts


def _tenths(field, scale=10.0):
    if field.strip() == SENTINEL:
        return None
    return float(field) / scale


_WEATHER_RANGES = {
    "temp_c": (-90.0, 60.0),
    "dewpoint_c": (-90.0, 60.0),
    "rel_humidity": (0.0, 1.0),
    "wind_ms": (0.0, 120.0),
    "precip_mm": (0.0, float("inf")),
}


def parse_weather(path):
    """Parse weather.csv into (rows, rejections). Tenths scaling, -9999 = missing."""
    rows = []
    rejections = []
    for line_no, row in _read_csv(path, WEATHER_HEADER):
        if len(row) != len(WEATHER_HEADER):
            rejections.append(Rejection(line_no, "wrong column count"))
            continue
        sid, ts = row[0], row[1]
        if not sid:
            rejections.append(Rejection(line_no, "empty station id"))
            continue
        try:
            at = parse_rfc3339(ts).replace(minute=0, second=0, microsecond=0)
        except ValueError:
            rejections.append(Rejection(line_no, "bad timestamp"))
            continue
        try:
            values = {
                "temp_c": _tenths(row[2]),
                "dewpoint_c": _tenths(row[3]),
                # tenths of a percent -> fraction
                "rel_humidity": _tenths(row[4], scale=1000.0),
                "wind_ms": _tenths(row[5]),
                "precip_mm": _tenths(row[6]),
            }
        except ValueError:
            rejections.append(Rejection(line_no, "bad numeric field"))
            continue
        bad = None
        for name, value in values.items():
            if value is None:
                continue
            lo, hi = _WEATHER_RANGES[name]
            if not (lo <= value <= hi) or (name == "wind_ms" and value >= 120.0):
                bad = f"{name} out of range"
                break
        if bad:
            rejections.append(Rejection(line_no, bad))
            continue
        rows.append(WeatherHour(sid, at, **values))
    return rows, rejections


def parse_stations(path):
    stations = []
    rejections = []
    seen = set()
    for line_no, row in _read_csv(path, STATION_HEADER):
        if len(row) != len(STATION_HEADER):
            rejections.append(Rejection(line_no, "wrong column count"))
            continue
        sid, lat, lon, name = row
        if not sid:
            rejections.append(Rejection(line_no, "empty station id"))
            continue
        loc, reason = _coord_or_reason(lat, lon)
        if reason:
            rejections.append(Rejection(line_no, reason))
            continue
        if sid in seen:
            rejections.append(Rejection(line_no, "duplicate"))
            continue
        seen.add(sid)
        stations.append(Station(sid, loc, name))
    return stations, rejections


def parse_roads(path):
    """Parse roads.ndjson into (roads, rejections). Per-feature rejection, not fatal."""
    roads = []
    rejections = []
    seen = set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot open {path}: {e}") from e
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                rejections.append(Rejection(line_no, "bad json"))
                continue
            road_id = obj.get("road_id")
            cls = obj.get("class")
            coords = obj.get("coords")
            if not road_id or not isinstance(road_id, str):
                rejections.append(Rejection(line_no, "missing road_id"))
                continue
            if cls not in ROAD_CLASSES:
                rejections.append(Rejection(line_no, "unknown class"))
                continue
            if not isinstance(coords, list) or len(coords) < 2:
                rejections.append(Rejection(line_no, "too few points"))
                continue
            points = []
            bad = None
            prev_lon = None
            for pair in coords:
                if (not isinstance(pair, list)) or len(pair) != 2:
                    bad = "bad coordinate"
                    break
                lon, lat = pair
                try:
                    lon = float(lon)
                    lat = float(lat)
                except (TypeError, ValueError):
                    bad = "bad coordinate"
                    break
                if not (math.isfinite(lat) and math.isfinite(lon)):
                    bad = "bad coordinate"
                    break
                if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                    bad = "coordinate out of range"
                    break
                if prev_lon is not None and abs(lon - prev_lon) > 180.0:
                    bad = "antimeridian"
                    break
                prev_lon = lon
                points.append(GeoPoint(lat, lon))
            if bad:
                rejections.append(Rejection(line_no, bad))
                continue
            if road_id in seen:
                rejections.append(Rejection(line_no, "duplicate"))
                continue
            seen.add(road_id)
            roads.append(RoadFeature(road_id, cls, Polyline(points)))
    return roads, rejections


def representative_stations(stations, candidate_cells, grid: GridSpec, max_n: int):
    """Greedy farthest-point station selection plus cell -> station assignment.

    Start at the station nearest the centroid of candidate-cell centers, then
    repeatedly add the station farthest from the already-selected set. Every
    candidate cell is mapped to its nearest selected station. Ties always keep
    the earliest station in input order, so the result is deterministic.
    """
    if not stations:
        raise InputError("no stations")
    if max_n < 1:
        raise InputError("max_n must be >= 1")
    cells = sorted(candidate_cells)
    if cells:
        centers = [cell_center(c, grid) for c in cells]
        centroid = GeoPoint(sum(p.lat for p in centers) / len(centers),
                            sum(p.lon for p in centers) / len(centers))
    else:
        centroid = stations[0].loc

    remaining = list(stations)
    start = min(remaining, key=lambda s: haversine_m(s.loc, centroid))
    selected = [start]
    remaining.remove(start)
    while remaining and len(selected) < max_n:
        best = None
        best_d = -1.0
        for s in remaining:
            d = min(haversine_m(s.loc, sel.loc) for sel in selected)
            if d > best_d:
                best, best_d = s, d
        selected.append(best)
        remaining.remove(best)

    mapping = {}
    for c in cells:
        center = cell_center(c, grid)
        nearest = min(selected, key=lambda s: haversine_m(s.loc, center))
        mapping[c] = nearest.id
    return selected, mapping


WEATHER_VARS = ("temp_c", "dewpoint_c", "rel_humidity", "wind_ms", "precip_mm")


@dataclass
class ClimBucket:
    means: dict
    counts: dict
    wet_rate: float | None


class Climatology:
    """Mean weather per (station, month, hour-of-day) bucket."""

    def __init__(self, table):
        self.table = table

    def lookup(self, station_id, month, hour):
        return self.table.get((station_id, month, hour))

    def to_json(self):
        out = {}
        for (sid, month, hour), bucket in sorted(self.table.items()):
            key = f"{sid}|{month}|{hour}"
            out[key] = {
                "means": {k: bucket.means[k] for k in sorted(bucket.means)},
                "counts": {k: bucket.counts[k] for k in sorted(bucket.counts)},
                "wet_rate": bucket.wet_rate,
            }
        return out

    @classmethod
    def from_json(cls, data):
        table = {}
        for key, value in data.items():
            sid, month, hour = key.rsplit("|", 2)
            table[(sid, int(month), int(hour))] = ClimBucket(
                dict(value["means"]), dict(value["counts"]), value["wet_rate"])
        return cls(table)


def build_climatology(weather, stations=None) -> Climatology:
    """Aggregate hourly rows into per-(station, month, hour-of-day) means.

    Missing values are excluded from their variable's mean and count. The wet
    rate is the share of precip-reporting hours with precip_mm > 0.
    """
    known = {s.id for s in stations} if stations is not None else None
    sums: dict = {}
    for row in weather:
        if known is not None and row.station_id not in known:
            continue
        key = (row.station_id, row.at.month, row.at.hour)
        acc = sums.setdefault(key, {v: [0.0, 0] for v in WEATHER_VARS} | {"_wet": [0, 0]})
        for var in WEATHER_VARS:
            value = getattr(row, var)
            if value is None:
                continue
            acc[var][0] += value
            acc[var][1] += 1
        if row.precip_mm is not None:
            acc["_wet"][1] += 1
            if row.precip_mm > 0.0:
                acc["_wet"][0] += 1
    table = {}
    for key, acc in sums.items():
        means = {}
        counts = {}
        for var in WEATHER_VARS:
            total, n = acc[var]
            counts[var] = n
            if n > 0:
                means[var] = total / n
        wet_n, wet_d = acc["_wet"]
        table[key] = ClimBucket(means, counts, (wet_n / wet_d) if wet_d else None)
    return Climatology(table)


# canonical NDJSON round trips for the intermediate workspace


def save_incidents(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({
                "id": r.id, "at": format_rfc3339(r.at),
                "lat": r.loc.lat, "lon": r.loc.lon,
                "severity": r.severity, "source": r.source,
            }, sort_keys=True) + "\n")


def load_incidents(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            out.append(IncidentRecord(d["id"], parse_rfc3339(d["at"]),
                                      GeoPoint(d["lat"], d["lon"]),
                                      d["severity"], d["source"]))
    return out


def save_stations(stations, path):
    with open(path, "w", encoding="utf-8") as fh:
        for s in stations:
            fh.write(json.dumps({"id": s.id, "lat": s.loc.lat, "lon": s.loc.lon,
                                 "name": s.name}, sort_keys=True) + "\n")


def load_stations(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            out.append(Station(d["id"], GeoPoint(d["lat"], d["lon"]), d["name"]))
    return out


def save_weather(rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps({
                "station_id": r.station_id, "at": format_rfc3339(r.at),
                "temp_c": r.temp_c, "dewpoint_c": r.dewpoint_c,
                "rel_humidity": r.rel_humidity, "wind_ms": r.wind_ms,
                "precip_mm": r.precip_mm,
            }, sort_keys=True) + "\n")


def load_weather(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            out.append(WeatherHour(d["station_id"], parse_rfc3339(d["at"]),
                                   d["temp_c"], d["dewpoint_c"], d["rel_humidity"],
                                   d["wind_ms"], d["precip_mm"]))
    return out


def save_roads(roads, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in roads:
            fh.write(json.dumps({"road_id": r.road_id, "class": r.road_class,
                                 "coords": r.geometry.coords()}, sort_keys=True) + "\n")


def load_roads(path):
    roads, rejections = parse_roads(path)
    if rejections:
        raise InputError(f"{path}: canonical roads file has {len(rejections)} bad lines")
    return roads
