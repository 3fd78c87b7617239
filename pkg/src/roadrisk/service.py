"""HTTP service: 4 HTML pages and 10 machine endpoints over loaded artifacts.

All request handlers read one immutable snapshot reference captured at entry,
so a forecast rebuild finishing mid-request can never produce a torn read.
Rebuilds happen on a background thread behind a single-flight guard and swap
the snapshot atomically; failures keep the previous snapshot and are surfaced
in /api/meta.
"""

from __future__ import annotations

import hmac
import html
import json
import logging
import os
import smtplib
import threading
import time
from collections import Counter
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from email.message import EmailMessage
from urllib.parse import parse_qs

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import HTMLResponse, JSONResponse, Response

from .bundle import startup_check
from .cellgrid import cell_of
from .common import (NoWeatherError, RoadRiskError, format_rfc3339,
                     parse_rfc3339, to_epoch_hour)
from .config import Config, Workspace
from .features import WeatherValues, baseline_features
from .geo import GeoPoint, BBox, TileCoord
from .model import bundle_digest, predict_proba
from .overlay import (HOURS_PER_WEEK, OverlayTensor, RoadForecast,
                      active_segment_ids, build_road_forecast,
                      build_road_tile_json, needs_refresh, render_raster_tile)
from .segments import SegmentIndex, match_point
from .weather_live import WeatherChain, apply_env_overrides, default_http_get

log = logging.getLogger("roadrisk.service")

MACHINE_PATHS = ("/health", "/api/risk", "/api/roads", "/api/segments/{segment_id}",
                 "/api/timeline", "/tiles/overlay/{how}/{z}/{x}/{y}.png",
                 "/tiles/roads/{hour}/{z}/{x}/{y}.json", "/api/meta",
                 "/api/stations", "/api/refresh")
PAGE_PATHS = ("/", "/about", "/contact")
OVERLAY_TILE_CACHE_MAX = 2048


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, fields=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.fields = fields or []


@dataclass
class Snapshot:
    """One immutable view of everything a request may touch."""

    snapshot_id: int
    baseline: object
    segment_model: object
    segments: list
    by_id: dict
    index: SegmentIndex
    active_ids: list
    context: object
    overlay: OverlayTensor | None
    forecast: RoadForecast | None


class LogTransport:
    """Default contact transport: one JSON line per message."""

    def __init__(self, path: str):
        self.path = path

    def send(self, message: dict) -> str:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(message, sort_keys=True) + "\n")
        return "log"


class SmtpTransport:
    """Attempt SMTP delivery, falling back to the log on any failure."""

    def __init__(self, smtp_config: dict, fallback: LogTransport):
        self.config = smtp_config
        self.fallback = fallback

    def send(self, message: dict) -> str:
        mail = EmailMessage()
        mail["From"] = self.config["sender"]
        mail["To"] = self.config["recipient"]
        mail["Subject"] = f"contact form: {message['name']}"
        mail.set_content(f"{message['email']}\n\n{message['body']}")
        try:
            with smtplib.SMTP(self.config["host"], self.config["port"],
                              timeout=10) as client:
                client.send_message(mail)
            return "smtp"
        except (OSError, smtplib.SMTPException) as e:
            log.warning("smtp delivery failed, logging instead: %s", e)
            return self.fallback.send(message)


class AppState:
    def __init__(self, workspace: Workspace, config: Config, artifacts: dict,
                 clock=None, http_get=default_http_get):
        self.workspace = workspace
        self.config = config
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        sc = config.service

        context = artifacts["context"]
        segments = artifacts["segments"]
        by_id = {s.segment_id: s for s in segments}
        active = [sid for sid in active_segment_ids(context.history)
                  if sid in by_id]
        providers = apply_env_overrides(sc.providers, os.environ)
        self.chain = WeatherChain(providers, context.climatology,
                                  context.station_map, context.stations,
                                  context.grid, clock=self.clock,
                                  http_get=http_get)
        self.digests = {"baseline": bundle_digest(artifacts["baseline"]),
                        "segment": bundle_digest(artifacts["segment"])}
        if sc.smtp is not None:
            self.transport = SmtpTransport(
                sc.smtp, LogTransport(workspace.contact_log_path))
        else:
            self.transport = LogTransport(workspace.contact_log_path)

        self._snapshot = Snapshot(
            snapshot_id=1, baseline=artifacts["baseline"],
            segment_model=artifacts["segment"], segments=segments,
            by_id=by_id,
            index=SegmentIndex([by_id[sid] for sid in active]),
            active_ids=active, context=context,
            overlay=artifacts["overlay"], forecast=None)
        self.last_refresh_error: str | None = None
        self.startup_warnings = list(artifacts.get("warnings", []))

        self._tile_cache: dict = {}
        self._tile_lock = threading.Lock()
        self._build_lock = threading.Lock()
        self._building = False
        self._build_seq = 0

        try:
            self._snapshot = self._with_new_forecast(self._snapshot)
        except Exception as e:  # degraded start, surfaced via meta/health
            self.last_refresh_error = f"{type(e).__name__}: {e}"
            log.error("initial forecast build failed: %s", e)

    # ------------------------------------------------------------- snapshots

    @property
    def snapshot(self) -> Snapshot:
        return self._snapshot

    def _with_new_forecast(self, snap: Snapshot) -> Snapshot:
        active_segments = [snap.by_id[sid] for sid in snap.active_ids]
        forecast = build_road_forecast(
            active_segments, snap.context.history, self.chain,
            snap.segment_model, self.clock(), snap.context.grid)
        return replace(snap, snapshot_id=snap.snapshot_id + 1,
                       forecast=forecast)

    def refresh_forecast(self) -> tuple:
        """(build id, started) — at most one rebuild runs at a time."""
        with self._build_lock:
            if self._building:
                return self._build_seq, False
            self._building = True
            self._build_seq += 1
            build_id = self._build_seq
        thread = threading.Thread(target=self._rebuild, name="forecast-rebuild",
                                  daemon=True)
        thread.start()
        return build_id, True

    def _rebuild(self):
        try:
            new_snap = self._with_new_forecast(self._snapshot)
        except Exception as e:
            self.last_refresh_error = f"{type(e).__name__}: {e}"
            log.error("forecast rebuild failed, keeping previous: %s", e)
        else:
            self._snapshot = new_snap
            self.last_refresh_error = None
        finally:
            with self._build_lock:
                self._building = False

    def maybe_refresh(self, snap: Snapshot):
        """Lazy trigger: stale forecasts rebuild in the background."""
        if needs_refresh(snap.forecast, self.clock(),
                         self.config.service.refresh_interval_s):
            self.refresh_forecast()

    # ----------------------------------------------------------------- tiles

    def overlay_tile(self, snap: Snapshot, how: int, tile: TileCoord) -> bytes:
        key = (id(snap.overlay), how, tile.z, tile.x, tile.y)
        with self._tile_lock:
            cached = self._tile_cache.get(key)
        if cached is not None:
            return cached
        png = render_raster_tile(tile, snap.overlay, how)
        with self._tile_lock:
            if len(self._tile_cache) >= OVERLAY_TILE_CACHE_MAX:
                self._tile_cache.clear()
            self._tile_cache[key] = png
        return png

    def cache_max_age(self, snap: Snapshot) -> int:
        interval = self.config.service.refresh_interval_s
        if snap.forecast is None:
            return 0
        remaining = interval - snap.forecast.age_s(self.clock())
        return max(0, int(remaining))


# ---------------------------------------------------------------- HTML pages

def _page(title: str, body: str) -> str:
    return (f"<!doctype html><html><head><meta charset=\"utf-8\">"
            f"<title>{html.escape(title)}</title></head>"
            f"<body>{body}</body></html>")


PLACEHOLDER_INDEX = _page("road risk map", (
    "<h1>Road incident risk</h1>"
    "<p>The map application has not been built into this deployment. "
    "The machine API is fully available; see /api/meta.</p>"
    "<nav><a href=\"/about\">about</a> <a href=\"/contact\">contact</a></nav>"))

PLACEHOLDER_ABOUT = _page("about", (
    "<h1>About</h1>"
    "<p>Weekly cell risk overlay and a rolling 24-hour road-segment "
    "forecast, served as raster and JSON tiles.</p>"
    "<nav><a href=\"/\">map</a> <a href=\"/contact\">contact</a></nav>"))

CONTACT_FORM = (
    "<h1>Contact</h1>"
    "{errors}"
    "<form method=\"post\" action=\"/contact\">"
    "<label>Name <input name=\"name\" value=\"{name}\"></label><br>"
    "<label>Email <input name=\"email\" value=\"{email}\"></label><br>"
    "<label>Message <textarea name=\"body\">{body}</textarea></label><br>"
    "<button type=\"submit\">Send</button></form>"
    "<nav><a href=\"/\">map</a> <a href=\"/about\">about</a></nav>")


def contact_page(errors=(), name="", email="", body_text="") -> str:
    error_html = ""
    if errors:
        items = "".join(f"<li>{html.escape(e)}</li>" for e in errors)
        error_html = f"<ul class=\"errors\">{items}</ul>"
    return _page("contact", CONTACT_FORM.format(
        errors=error_html, name=html.escape(name, quote=True),
        email=html.escape(email, quote=True), body=html.escape(body_text)))


def _static_page(workspace: Workspace, filename: str, fallback: str) -> str:
    path = os.path.join(workspace.static_dir, filename)
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    return fallback


# ------------------------------------------------------------------- the app

def route_census(app: FastAPI) -> dict:
    """Public routes partitioned into HTML pages and machine endpoints."""
    pages = []
    machine = []
    for route in app.routes:
        path = getattr(route, "path", None)
        if path is None:
            continue
        methods = sorted(getattr(route, "methods", set()) - {"HEAD", "OPTIONS"})
        for method in methods:
            if path in PAGE_PATHS:
                pages.append((method, path))
            else:
                machine.append((method, path))
    return {"pages": sorted(pages), "machine": sorted(machine)}


def create_app(workspace: Workspace, config: Config, clock=None,
               http_get=default_http_get, artifacts: dict | None = None) -> FastAPI:
    """Build the application; artifacts default to a fresh startup check."""
    if artifacts is None:
        report = startup_check(workspace, config.service)
        if not report.ok:
            raise RoadRiskError(report.message or "startup failed",
                                report.code or "CONFIG_INVALID")
        artifacts = dict(report.artifacts)
        artifacts["warnings"] = report.warnings
    state = AppState(workspace, config, artifacts, clock=clock,
                     http_get=http_get)

    app = FastAPI(docs_url=None, redoc_url=None, openapi_url=None)
    app.state.rr = state

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, err: ApiError):
        payload = {"error": {"code": err.code, "message": err.message}}
        if err.fields:
            payload["error"]["fields"] = err.fields
        return JSONResponse(payload, status_code=err.status)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, err: RequestValidationError):
        fields = sorted({str(item["loc"][-1]) for item in err.errors()})
        return JSONResponse(
            {"error": {"code": "VALIDATION",
                       "message": "invalid request parameters",
                       "fields": fields}},
            status_code=422)

    @app.exception_handler(NoWeatherError)
    async def handle_no_weather(request: Request, err: NoWeatherError):
        return JSONResponse({"error": {"code": "NO_WEATHER",
                                       "message": str(err)}}, status_code=503)

    @app.exception_handler(Exception)
    async def handle_unexpected(request: Request, err: Exception):
        log.exception("unhandled error on %s", request.url.path)
        return JSONResponse({"error": {"code": "INTERNAL",
                                       "message": "internal error"}},
                            status_code=500)

    @app.middleware("http")
    async def access_log(request: Request, call_next):
        started = time.perf_counter()
        response = await call_next(request)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        log.info("%s %s %d %.1fms", request.method, request.url.path,
                 response.status_code, elapsed_ms)
        return response

    # ------------------------------------------------------------- helpers

    def check_range(name: str, value: float, lo: float, hi: float):
        if not lo <= value <= hi:
            raise ApiError(422, "VALIDATION",
                           f"{name} must be within [{lo}, {hi}]", [name])

    def parse_tile(z: int, x: int, y: int) -> TileCoord:
        try:
            return TileCoord(z, x, y)
        except ValueError as e:
            raise ApiError(422, "VALIDATION", str(e), ["z", "x", "y"]) from e

    def forecast_offset(snap: Snapshot, at: datetime) -> int | None:
        if snap.forecast is None or not snap.forecast.hours:
            return None
        offset = to_epoch_hour(at) - to_epoch_hour(snap.forecast.hours[0])
        if 0 <= offset < snap.forecast.horizon:
            return offset
        return None

    def hour_weather(q: GeoPoint):
        """24 chain hours; raises NO_WEATHER only on total fallback failure."""
        return state.chain.get_point_forecast(q, 24)

    def baseline_score_at(snap: Snapshot, cell, fh) -> float:
        w = WeatherValues(fh.temp_c, fh.dewpoint_c, fh.rel_humidity,
                          fh.wind_ms, fh.precip_mm)
        row = baseline_features(cell, fh.valid_at, snap.context.history, w,
                                snap.context.grid)
        return float(predict_proba(snap.baseline, row))

    # ---------------------------------------------------------------- pages

    @app.get("/", response_class=HTMLResponse)
    def index_page():
        return _static_page(workspace, "index.html", PLACEHOLDER_INDEX)

    @app.get("/about", response_class=HTMLResponse)
    def about_page():
        return _static_page(workspace, "about.html", PLACEHOLDER_ABOUT)

    @app.get("/contact", response_class=HTMLResponse)
    def contact_get():
        return _static_page(workspace, "contact.html", contact_page())

    @app.post("/contact", response_class=HTMLResponse)
    async def contact_post(request: Request):
        raw = await request.body()
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("application/json"):
            try:
                form = json.loads(raw)
            except ValueError:
                form = {}
            values = {k: str(form.get(k, "")) for k in ("name", "email", "body")}
        else:
            parsed = parse_qs(raw.decode("utf-8", "replace"))
            values = {k: parsed.get(k, [""])[0] for k in ("name", "email", "body")}
        errors = []
        if not values["body"].strip():
            errors.append("message body must not be empty")
        if "@" not in values["email"]:
            errors.append("email must contain @")
        if errors:
            return HTMLResponse(contact_page(errors, values["name"],
                                             values["email"], values["body"]),
                                status_code=400)
        message = {"received_at": format_rfc3339(state.clock()),
                   "name": values["name"], "email": values["email"],
                   "body": values["body"]}
        delivered = state.transport.send(message)
        return HTMLResponse(_page("message sent", (
            "<h1>Thanks</h1><p>Your message was recorded"
            f" (delivery: {html.escape(delivered)}).</p>"
            "<nav><a href=\"/\">back to the map</a></nav>")))

    # ------------------------------------------------------------- machine

    @app.get("/health")
    def health():
        snap = state.snapshot
        age = None if snap.forecast is None else snap.forecast.age_s(state.clock())
        ok = snap.overlay is not None and snap.forecast is not None
        return {"status": "ok" if ok else "degraded",
                "model_loaded": True,
                "overlay_loaded": snap.overlay is not None,
                "forecast_age_s": age}

    @app.get("/api/risk")
    def api_risk(lat: float, lon: float, at: str | None = None):
        check_range("lat", lat, -90.0, 90.0)
        check_range("lon", lon, -180.0, 180.0)
        snap = state.snapshot
        state.maybe_refresh(snap)
        q = GeoPoint(lat, lon)
        hours = hour_weather(q)
        if at is None:
            wanted = hours[0]
        else:
            try:
                at_dt = parse_rfc3339(at)
            except ValueError as e:
                raise ApiError(422, "VALIDATION", str(e), ["at"]) from e
            wanted = next((fh for fh in hours
                           if to_epoch_hour(fh.valid_at) == to_epoch_hour(at_dt)),
                          None)
            if wanted is None:
                raise ApiError(422, "VALIDATION",
                               "at must fall within the next 24 hours", ["at"])
        cell = cell_of(q, snap.context.grid)
        score = baseline_score_at(snap, cell, wanted)

        nearest = None
        result = match_point(q, snap.index,
                             cutoff_m=state.config.pipeline.match_cutoff_m)
        if result.matched:
            offset = forecast_offset(snap, wanted.valid_at)
            seg_score = None
            if offset is not None and result.segment_id in snap.forecast.segments:
                seg_score = snap.forecast.segments[result.segment_id].scores[offset]
            nearest = {"id": result.segment_id,
                       "distance_m": result.distance_m,
                       "segment_score": seg_score}
        return {"cell_id": cell.token(),
                "at": format_rfc3339(wanted.valid_at),
                "baseline_score": score,
                "nearest_segment": nearest,
                "weather": wanted.to_json(),
                "sources": [fh.source for fh in hours]}

    @app.get("/api/roads")
    def api_roads(min_lat: float, min_lon: float, max_lat: float,
                  max_lon: float, hour_offset: int = 0):
        for name, value in (("min_lat", min_lat), ("max_lat", max_lat)):
            check_range(name, value, -90.0, 90.0)
        for name, value in (("min_lon", min_lon), ("max_lon", max_lon)):
            check_range(name, value, -180.0, 180.0)
        if min_lat > max_lat or min_lon > max_lon:
            raise ApiError(422, "VALIDATION", "bbox minimum exceeds maximum",
                           ["min_lat", "min_lon", "max_lat", "max_lon"])
        if not 0 <= hour_offset < 24:
            raise ApiError(422, "VALIDATION", "hour_offset must be in 0..23",
                           ["hour_offset"])
        snap = state.snapshot
        state.maybe_refresh(snap)
        if snap.forecast is None:
            return {"segments": [], "count": 0, "truncated": False,
                    "hour_offset": hour_offset, "generated_at": None,
                    "note": "forecast_unavailable"}
        query = BBox(min_lat, min_lon, max_lat, max_lon)
        rows = []
        truncated = False
        for sid in sorted(snap.forecast.segments):
            seg = snap.by_id.get(sid)
            if seg is None or not seg.geometry.bbox().intersects(query):
                continue
            if len(rows) >= state.config.service.max_results:
                truncated = True
                break
            rows.append({
                "id": sid, "class": seg.road_class,
                "score": snap.forecast.segments[sid].scores[hour_offset],
                "coords": [[round(p.lon, 5), round(p.lat, 5)]
                           for p in seg.geometry.points]})
        return {"segments": rows, "count": len(rows), "truncated": truncated,
                "hour_offset": hour_offset,
                "generated_at": format_rfc3339(snap.forecast.generated_at)}

    @app.get("/api/segments/{segment_id}")
    def api_segment_detail(segment_id: str):
        snap = state.snapshot
        state.maybe_refresh(snap)
        if segment_id not in snap.by_id or segment_id not in set(snap.active_ids):
            raise ApiError(404, "SEGMENT_NOT_FOUND",
                           f"no active segment {segment_id!r}")
        seg = snap.by_id[segment_id]
        history = snap.context.history
        same_how = [history.seg_how.get((segment_id, how), 0)
                    for how in range(HOURS_PER_WEEK)]
        last_at = history.seg_last_at.get(segment_id)
        series = []
        note = None
        if snap.forecast is not None and segment_id in snap.forecast.segments:
            sf = snap.forecast.segments[segment_id]
            series = [{"valid_at": format_rfc3339(at), "score": score,
                       "source": source}
                      for at, score, source in zip(snap.forecast.hours,
                                                   sf.scores, sf.sources)]
        else:
            note = "forecast_unavailable"
        doc = {
            "id": segment_id,
            "class": seg.road_class,
            "length_m": seg.length_m,
            "geometry": seg.geometry.coords(),
            "history": {
                "total": history.seg_total.get(segment_id, 0),
                "same_how": same_how,
                "severity_mean": history.seg_severity_mean.get(segment_id),
                "last_at": format_rfc3339(last_at) if last_at else None,
            },
            "series": series,
        }
        if note:
            doc["note"] = note
        return doc

    @app.get("/api/timeline")
    def api_timeline(lat: float, lon: float):
        check_range("lat", lat, -90.0, 90.0)
        check_range("lon", lon, -180.0, 180.0)
        snap = state.snapshot
        state.maybe_refresh(snap)
        q = GeoPoint(lat, lon)
        cell = cell_of(q, snap.context.grid)
        if cell not in set(snap.context.candidates):
            return {"cell_id": None, "entries": [], "note": "no_coverage"}
        hours = hour_weather(q)
        entries = [{"valid_at": format_rfc3339(fh.valid_at),
                    "score": baseline_score_at(snap, cell, fh),
                    "source": fh.source} for fh in hours]
        return {"cell_id": cell.token(), "entries": entries}

    @app.get("/tiles/overlay/{how}/{z}/{x}/{y}.png")
    def overlay_tile(how: int, z: int, x: int, y: int):
        if not 0 <= how < HOURS_PER_WEEK:
            raise ApiError(422, "VALIDATION", "hour-of-week must be in 0..167",
                           ["how"])
        tile = parse_tile(z, x, y)
        snap = state.snapshot
        if snap.overlay is None:
            raise ApiError(503, "OVERLAY_UNAVAILABLE", "no overlay loaded")
        png = state.overlay_tile(snap, how, tile)
        max_age = state.cache_max_age(snap)
        return Response(png, media_type="image/png",
                        headers={"Cache-Control": f"public, max-age={max_age}"})

    @app.get("/tiles/roads/{hour}/{z}/{x}/{y}.json")
    def road_tile(hour: int, z: int, x: int, y: int):
        if not 0 <= hour < 24:
            raise ApiError(422, "VALIDATION", "hour offset must be in 0..23",
                           ["hour"])
        tile = parse_tile(z, x, y)
        snap = state.snapshot
        state.maybe_refresh(snap)
        if snap.forecast is None:
            doc = {"tile": {"z": z, "x": x, "y": y}, "hour_offset": hour,
                   "generated_at": None, "segments": [],
                   "note": "forecast_unavailable"}
        else:
            doc = build_road_tile_json(
                tile, snap.forecast, hour, snap.by_id,
                min_road_zoom=state.config.service.min_road_zoom)
        max_age = state.cache_max_age(snap)
        return JSONResponse(
            doc, headers={"Cache-Control": f"public, max-age={max_age}"})

    @app.get("/api/meta")
    def api_meta():
        snap = state.snapshot
        overlay_meta = None
        if snap.overlay is not None:
            overlay_meta = dict(snap.overlay.meta)
        forecast_meta = None
        if snap.forecast is not None:
            forecast_meta = {
                "generated_at": format_rfc3339(snap.forecast.generated_at),
                "age_s": snap.forecast.age_s(state.clock()),
                "horizon": snap.forecast.horizon,
                "segments": len(snap.forecast.segments),
            }
        return {
            "snapshot_id": snap.snapshot_id,
            "models": {
                "baseline": {"digest": state.digests["baseline"],
                             "trained_at": snap.baseline.meta.get("trained_at"),
                             "metrics": snap.baseline.metrics.to_json()
                             if snap.baseline.metrics else None},
                "segment": {"digest": state.digests["segment"],
                            "trained_at": snap.segment_model.meta.get("trained_at"),
                            "metrics": snap.segment_model.metrics.to_json()
                            if snap.segment_model.metrics else None},
            },
            "overlay": overlay_meta,
            "forecast": forecast_meta,
            "last_refresh_error": state.last_refresh_error,
            "provider_health": state.chain.health(),
            "grid": {"resolution_deg": snap.context.grid.resolution_deg},
            "refresh_interval_s": state.config.service.refresh_interval_s,
            "counts": {"segments": len(snap.segments),
                       "active_segments": len(snap.active_ids),
                       "candidates": len(snap.context.candidates),
                       "stations": len(snap.context.stations)},
            "startup_warnings": state.startup_warnings,
        }

    @app.get("/api/stations")
    def api_stations():
        snap = state.snapshot
        assigned = Counter(snap.context.station_map.values())
        rows = [{"id": s.id, "lat": s.loc.lat, "lon": s.loc.lon,
                 "name": s.name, "assigned_cells": assigned.get(s.id, 0)}
                for s in snap.context.stations]
        return {"stations": rows, "count": len(rows)}

    @app.post("/api/refresh", status_code=202)
    def api_refresh(request: Request):
        token = state.config.service.admin_token
        given = request.headers.get("X-Admin-Token", "")
        if not token or not hmac.compare_digest(given, token):
            raise ApiError(403, "FORBIDDEN", "admin token required")
        build_id, started = state.refresh_forecast()
        return {"build_id": build_id,
                "status": "started" if started else "already_building"}

    return app
