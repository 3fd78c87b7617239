"""Weekly cell overlay and rolling 24-hour road forecast, plus tile rendering.

The overlay is a cells x 168 score matrix evaluated once per hour-of-week
against a representative week (first Monday of a configured month), using
climatology weather for each cell's assigned station. Raster tiles are
rendered from it with a stepped color ramp and a from-scratch PNG writer so
identical inputs give byte-identical tiles. The road forecast scores every
active segment for the next 24 hours with whatever weather the live chain
supplies.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .cellgrid import EDGE_EPS, CellId, GridSpec
from .common import (RoadRiskError, dump_json, format_rfc3339,
                     from_epoch_hour, parse_rfc3339, to_epoch_hour)
from .features import (WeatherValues, HistoricalWeather, baseline_features,
                       segment_features)
from .geo import TileCoord, tile_bounds
from .model import ModelBundle, bundle_digest, predict_proba_many

HOURS_PER_WEEK = 168
TILE_PX = 256
OVERLAY_MAGIC = b"RRMO1"
FORECAST_VERSION = "rrm-forecast-v1"
DEFAULT_REFRESH_S = 3600
MIN_ROAD_ZOOM = 10
COORD_DECIMALS = 5  # road tile coords quantized to 1e-5 degrees


class OverlayError(RoadRiskError):
    def __init__(self, message: str, code: str = "OVERLAY_INVALID"):
        super().__init__(message, code)


@dataclass(frozen=True)
class ColorRamp:
    """Stepped score-to-RGBA map; a score takes the last stop at or below it."""

    stops: tuple

    def __post_init__(self):
        if not self.stops:
            raise ValueError("ramp needs at least one stop")
        if self.stops[0][0] != 0.0:
            raise ValueError("first ramp threshold must be 0")
        prev = -1.0
        for threshold, rgba in self.stops:
            if not 0.0 <= threshold <= 1.0:
                raise ValueError(f"ramp threshold out of range: {threshold}")
            if threshold <= prev:
                raise ValueError("ramp thresholds must be strictly increasing")
            prev = threshold
            if len(rgba) != 4 or any(not 0 <= v <= 255 for v in rgba):
                raise ValueError(f"bad RGBA stop: {rgba}")

    def thresholds(self) -> np.ndarray:
        return np.array([t for t, _ in self.stops], dtype=np.float64)

    def colors(self) -> np.ndarray:
        return np.array([c for _, c in self.stops], dtype=np.uint8)

    def color_for(self, score: float):
        idx = int(np.searchsorted(self.thresholds(), score, side="right")) - 1
        return tuple(int(v) for v in self.stops[idx][1])


DEFAULT_RAMP = ColorRamp((
    (0.0, (0, 0, 0, 0)),
    (0.25, (255, 220, 0, 160)),
    (0.5, (255, 140, 0, 190)),
    (0.75, (220, 30, 30, 220)),
    (0.9, (130, 0, 20, 240)),
))


@dataclass
class OverlayTensor:
    cells: list
    scores: np.ndarray  # (n_cells, 168) float32 in [0, 1]
    meta: dict = field(default_factory=dict)

    def validate(self):
        if self.scores.shape != (len(self.cells), HOURS_PER_WEEK):
            raise OverlayError(
                f"score matrix is {self.scores.shape}, expected "
                f"({len(self.cells)}, {HOURS_PER_WEEK})")
        if len(self.cells) and (float(self.scores.min()) < 0.0
                                or float(self.scores.max()) > 1.0):
            raise OverlayError("overlay scores outside [0, 1]")

    def cell_index(self) -> dict:
        return {cell: i for i, cell in enumerate(self.cells)}


def week_anchor(year: int, month: int) -> datetime:
    """First Monday 00:00 UTC of the month; the whole week stays in-month."""
    day = datetime(year, month, 1, tzinfo=timezone.utc)
    return day + timedelta(days=(7 - day.weekday()) % 7)


def build_weekly_overlay(candidate_cells, history, climatology, station_map,
                         bundle: ModelBundle, grid: GridSpec,
                         rep_month: int | None = None,
                         rep_year: int | None = None,
                         model_digest: str | None = None) -> OverlayTensor:
    layer = bundle.meta.get("layer")
    if layer != "baseline":
        raise OverlayError(f"overlay needs a baseline-layer model, got {layer!r}")
    cells = sorted(set(candidate_cells))
    missing = [c for c in cells if c not in station_map]
    if missing:
        raise OverlayError(
            f"{len(missing)} candidate cells lack a station assignment, "
            f"first {missing[0].token()}")

    # the representative week defaults to the month the model was trained on
    trained_at = bundle.meta.get("trained_at")
    stamp = parse_rfc3339(trained_at) if trained_at else datetime(
        1970, 1, 1, tzinfo=timezone.utc)
    if rep_month is None:
        rep_month = stamp.month
    if rep_year is None:
        rep_year = stamp.year
    if not 1 <= rep_month <= 12:
        raise OverlayError(f"rep_month out of range: {rep_month}")
    anchor = week_anchor(rep_year, rep_month)
    hours = [anchor + timedelta(hours=h) for h in range(HOURS_PER_WEEK)]

    weather = HistoricalWeather([], climatology, mode="climatology")
    rows = []
    for cell in cells:
        sid = station_map[cell]
        for at in hours:
            w = weather.values_for(sid, at)
            rows.append(baseline_features(cell, at, history, w, grid))
    if rows:
        scores = predict_proba_many(bundle, rows).reshape(
            len(cells), HOURS_PER_WEEK)
    else:
        scores = np.zeros((0, HOURS_PER_WEEK))
    tensor = OverlayTensor(
        cells=cells,
        scores=np.clip(scores, 0.0, 1.0).astype(np.float32),
        meta={
            "model_digest": model_digest or bundle_digest(bundle),
            "built_at": format_rfc3339(stamp),
            "grid_resolution_deg": grid.resolution_deg,
            "week_anchor": format_rfc3339(anchor),
            "rep_month": rep_month,
            "n_cells": len(cells),
        })
    tensor.validate()
    return tensor


# binary layout: magic, <II cell count / hours-per-row, <d grid resolution,
# then <II per cell id, then row-major little-endian float32 scores
_HEADER = struct.Struct("<IId")
_CELL = struct.Struct("<II")


def overlay_bytes(tensor: OverlayTensor) -> bytes:
    tensor.validate()
    res = float(tensor.meta.get("grid_resolution_deg", 0.2))
    parts = [OVERLAY_MAGIC, _HEADER.pack(len(tensor.cells), HOURS_PER_WEEK, res)]
    for cell in tensor.cells:
        parts.append(_CELL.pack(cell.row, cell.col))
    parts.append(np.ascontiguousarray(tensor.scores, dtype="<f4").tobytes())
    return b"".join(parts)


def save_overlay(tensor: OverlayTensor, path) -> None:
    """Binary tensor at path plus a JSON meta sidecar at path + '.meta.json'."""
    with open(path, "wb") as fh:
        fh.write(overlay_bytes(tensor))
    dump_json(tensor.meta, str(path) + ".meta.json", indent=1)


def load_overlay(path) -> OverlayTensor:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise OverlayError(f"cannot read overlay: {e}") from e
    if blob[:len(OVERLAY_MAGIC)] != OVERLAY_MAGIC:
        raise OverlayError(f"{path}: bad overlay magic")
    off = len(OVERLAY_MAGIC)
    if len(blob) < off + _HEADER.size:
        raise OverlayError(f"{path}: truncated overlay header")
    n_cells, n_hours, res = _HEADER.unpack_from(blob, off)
    if n_hours != HOURS_PER_WEEK:
        raise OverlayError(f"{path}: unsupported hour axis {n_hours}")
    off += _HEADER.size
    need = n_cells * _CELL.size + n_cells * n_hours * 4
    if len(blob) != off + need:
        raise OverlayError(f"{path}: overlay size mismatch")
    cells = []
    for _ in range(n_cells):
        row, col = _CELL.unpack_from(blob, off)
        cells.append(CellId(row, col))
        off += _CELL.size
    scores = np.frombuffer(blob, dtype="<f4", count=n_cells * n_hours,
                           offset=off).reshape(n_cells, n_hours).copy()
    meta = {"grid_resolution_deg": res}
    sidecar = str(path) + ".meta.json"
    if os.path.exists(sidecar):
        with open(sidecar, encoding="utf-8") as fh:
            meta = json.load(fh)
    tensor = OverlayTensor(cells, scores, meta)
    tensor.validate()
    return tensor


def encode_png_rgba(pixels: np.ndarray) -> bytes:
    """Minimal PNG writer: 8-bit RGBA, filter 0 rows, fixed zlib level 6."""
    if pixels.ndim != 3 or pixels.shape[2] != 4 or pixels.dtype != np.uint8:
        raise ValueError("pixels must be (h, w, 4) uint8")
    height, width = pixels.shape[:2]

    def chunk(tag: bytes, data: bytes) -> bytes:
        return (struct.pack(">I", len(data)) + tag + data
                + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF))

    ihdr = struct.pack(">IIBBBBB", width, height, 8, 6, 0, 0, 0)
    raw = b"".join(b"\x00" + pixels[y].tobytes() for y in range(height))
    return (b"\x89PNG\r\n\x1a\n"
            + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(raw, 6))
            + chunk(b"IEND", b""))


def _snapped_floor_vec(q: np.ndarray) -> np.ndarray:
    f = np.floor(q)
    f = np.where(q - f > 1.0 - EDGE_EPS, f + 1.0, f)
    return f.astype(np.int64)


def render_raster_tile(t: TileCoord, tensor: OverlayTensor, hour_of_week: int,
                       ramp: ColorRamp = DEFAULT_RAMP) -> bytes:
    """256x256 RGBA PNG; pixels outside candidate cells are transparent."""
    if not 0 <= hour_of_week < HOURS_PER_WEEK:
        raise ValueError(f"hour_of_week out of range: {hour_of_week}")
    res = float(tensor.meta.get("grid_resolution_deg", 0.2))
    grid = GridSpec(res)
    n = 1 << t.z

    px = (np.arange(TILE_PX, dtype=np.float64) + 0.5) / TILE_PX
    lons = (t.x + px) / n * 360.0 - 180.0
    lats = np.degrees(np.arctan(np.sinh(np.pi * (1.0 - 2.0 * (t.y + px) / n))))

    # same snap-and-clamp as cell_of, vectorized over pixel centers
    rows = np.clip(_snapped_floor_vec((lats + 90.0) / res), 0, grid.n_rows - 1)
    cols = np.clip(_snapped_floor_vec((lons + 180.0) / res), 0, grid.n_cols - 1)
    keys = rows[:, None] * grid.n_cols + cols[None, :]

    lut = {cell.row * grid.n_cols + cell.col: i
           for i, cell in enumerate(tensor.cells)}
    unique, inverse = np.unique(keys.ravel(), return_inverse=True)
    thresholds = ramp.thresholds()
    colors = ramp.colors()
    palette = np.zeros((len(unique), 4), dtype=np.uint8)
    for u, key in enumerate(unique):
        i = lut.get(int(key))
        if i is None:
            continue
        score = float(tensor.scores[i, hour_of_week])
        stop = int(np.searchsorted(thresholds, score, side="right")) - 1
        palette[u] = colors[stop]
    image = palette[inverse].reshape(TILE_PX, TILE_PX, 4)
    return encode_png_rgba(image)


@dataclass
class SegmentForecast:
    scores: list
    sources: list


@dataclass
class RoadForecast:
    """24 hourly scores per active segment, starting the next full hour."""

    generated_at: datetime
    horizon: int
    hours: list
    segments: dict

    def age_s(self, now: datetime) -> float:
        return (now - self.generated_at).total_seconds()

    def to_json(self) -> dict:
        return {
            "format_version": FORECAST_VERSION,
            "generated_at": format_rfc3339(self.generated_at),
            "horizon": self.horizon,
            "hours": [format_rfc3339(h) for h in self.hours],
            "segments": {
                sid: {"scores": sf.scores, "sources": sf.sources}
                for sid, sf in sorted(self.segments.items())
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RoadForecast":
        if doc.get("format_version") != FORECAST_VERSION:
            raise OverlayError(
                f"unsupported forecast version {doc.get('format_version')!r}")
        return cls(
            generated_at=parse_rfc3339(doc["generated_at"]),
            horizon=int(doc["horizon"]),
            hours=[parse_rfc3339(h) for h in doc["hours"]],
            segments={
                sid: SegmentForecast(list(v["scores"]), list(v["sources"]))
                for sid, v in doc["segments"].items()
            })


def active_segment_ids(history) -> list:
    """Segments with at least one matched historical event, sorted."""
    return sorted(sid for sid, count in history.seg_total.items() if count > 0)


def build_road_forecast(segments, history, weather_source,
                        bundle: ModelBundle, now: datetime,
                        grid: GridSpec, horizon: int = 24) -> RoadForecast:
    layer = bundle.meta.get("layer")
    if layer != "segment":
        raise OverlayError(f"forecast needs a segment-layer model, got {layer!r}")
    generated_at = from_epoch_hour(to_epoch_hour(now))
    hours = [generated_at + timedelta(hours=i + 1) for i in range(horizon)]

    active = {s.segment_id for s in segments} & set(active_segment_ids(history))
    ordered = sorted(active)
    by_id = {s.segment_id: s for s in segments}

    rows = []
    sources = {}
    for sid in ordered:
        seg = by_id[sid]
        fc = weather_source.get_point_forecast(seg.midpoint, horizon)
        if len(fc) != horizon:
            raise OverlayError(
                f"weather source returned {len(fc)} hours, expected {horizon}")
        sources[sid] = [fh.source for fh in fc]
        for fh in fc:
            w = WeatherValues(fh.temp_c, fh.dewpoint_c, fh.rel_humidity,
                              fh.wind_ms, fh.precip_mm)
            rows.append(segment_features(seg, fh.valid_at, history, w, grid))

    forecasts = {}
    if rows:
        scores = predict_proba_many(bundle, rows)
        for i, sid in enumerate(ordered):
            chunk = scores[i * horizon:(i + 1) * horizon]
            forecasts[sid] = SegmentForecast(
                [float(v) for v in chunk], sources[sid])
    return RoadForecast(generated_at, horizon, hours, forecasts)


def build_road_tile_json(t: TileCoord, forecast: RoadForecast,
                         hour_offset: int, segments_by_id: dict,
                         min_road_zoom: int = MIN_ROAD_ZOOM) -> dict:
    if not 0 <= hour_offset < forecast.horizon:
        raise ValueError(f"hour_offset out of range: {hour_offset}")
    doc = {
        "tile": {"z": t.z, "x": t.x, "y": t.y},
        "hour_offset": hour_offset,
        "generated_at": format_rfc3339(forecast.generated_at),
        "segments": [],
    }
    if t.z < min_road_zoom:
        doc["note"] = "zoom_too_low"
        return doc
    bounds = tile_bounds(t)
    for sid in sorted(forecast.segments):
        seg = segments_by_id.get(sid)
        if seg is None:
            raise OverlayError(f"forecast segment {sid} missing from the store")
        if not seg.geometry.bbox().intersects(bounds):
            continue
        coords = [[round(p.lon, COORD_DECIMALS), round(p.lat, COORD_DECIMALS)]
                  for p in seg.geometry.points]
        doc["segments"].append({
            "id": sid,
            "class": seg.road_class,
            "score": forecast.segments[sid].scores[hour_offset],
            "coords": coords,
        })
    return doc


def needs_refresh(forecast: RoadForecast | None, now: datetime,
                  interval_s: float = DEFAULT_REFRESH_S) -> bool:
    return forecast is None or forecast.age_s(now) >= interval_s
