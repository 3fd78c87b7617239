"""HTTP service tests against a deployed workspace fixture."""

import dataclasses
import json
import os
import threading
import time
from datetime import datetime, timedelta, timezone
from urllib.parse import quote

import pytest
from fastapi.testclient import TestClient

from roadrisk.cellgrid import cell_of
from roadrisk.common import (format_rfc3339, from_epoch_hour, sha256_file,
                             to_epoch_hour)
from roadrisk.config import Config
from roadrisk.features import load_context, save_context
from roadrisk.geo import GeoPoint, tile_for
from roadrisk.ingest import Climatology
from roadrisk.model import bundle_digest
from roadrisk.overlay import render_raster_tile
from roadrisk.service import MACHINE_PATHS, create_app, route_census

UTC = timezone.utc
START = datetime(2020, 12, 31, 10, 0, tzinfo=UTC)
TOKEN = "sekrit-token"

RA_MID = GeoPoint(39.50, -75.49775)
FAR_AWAY = GeoPoint(39.9, -75.9)          # outside every candidate cell
NO_ROADS = GeoPoint(39.6, -75.6)          # covered latitudes, >1km from roads


class FakeClock:
    def __init__(self, start=START):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now = self.now + timedelta(seconds=seconds)


def _no_http(url, timeout_s):
    raise AssertionError(f"unexpected live fetch: {url}")


def make_config(providers=None, **service_overrides) -> Config:
    service = {"port": 8080, "admin_token": TOKEN,
               "refresh_interval_s": 3600,
               "providers": providers or []}
    service.update(service_overrides)
    return Config.from_doc({"seed": 42, "service": service})


def make_app(deployment, providers=None, http_get=None, **service_overrides):
    clock = FakeClock()
    app = create_app(deployment.ws, make_config(providers, **service_overrides),
                     clock=clock, http_get=http_get or _no_http)
    return app, clock


@pytest.fixture
def served(deployment):
    app, clock = make_app(deployment)
    with TestClient(app) as client:
        yield client, clock, deployment


# ----------------------------------------------------------------- routing


def test_route_census(served):
    client, _, _ = served
    census = route_census(client.app)
    assert census["pages"] == sorted([
        ("GET", "/"), ("GET", "/about"), ("GET", "/contact"),
        ("POST", "/contact")])
    assert len(census["machine"]) == 10
    assert {path for _, path in census["machine"]} == set(MACHINE_PATHS)
    assert len(census["pages"]) + len(census["machine"]) == 14


def test_pages_render(served):
    client, _, _ = served
    for path in ("/", "/about", "/contact"):
        r = client.get(path)
        assert r.status_code == 200
        assert r.headers["content-type"].startswith("text/html")
        assert "<h1>" in r.text


def test_static_pages_take_precedence(deployment):
    os.makedirs(deployment.ws.static_dir, exist_ok=True)
    custom = "<!doctype html><html><body><h1>custom build</h1></body></html>"
    with open(os.path.join(deployment.ws.static_dir, "index.html"), "w",
              encoding="utf-8") as fh:
        fh.write(custom)
    app, _ = make_app(deployment)
    with TestClient(app) as client:
        assert client.get("/").text == custom
        assert "custom build" not in client.get("/about").text


# ----------------------------------------------------------------- contact


def test_contact_post_writes_log(served):
    client, _, dep = served
    r = client.post("/contact", data={"name": "Ada", "email": "ada@example.org",
                                      "body": "road by my house looks risky"})
    assert r.status_code == 200
    assert "Thanks" in r.text
    with open(dep.ws.contact_log_path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    assert len(lines) == 1
    assert lines[0]["email"] == "ada@example.org"
    assert lines[0]["body"].startswith("road by my house")
    assert lines[0]["received_at"] == format_rfc3339(START)


def test_contact_post_rerenders_with_errors(served):
    client, _, _ = served
    r = client.post("/contact", data={"name": "Ada", "email": "not-an-email",
                                      "body": ""})
    assert r.status_code == 400
    assert "email must contain @" in r.text
    assert "message body must not be empty" in r.text
    assert 'value="Ada"' in r.text  # submitted values survive the re-render


def test_contact_smtp_falls_back_to_log(deployment):
    smtp = {"host": "127.0.0.1", "port": 1, "sender": "svc@example.org",
            "recipient": "ops@example.org"}
    app, _ = make_app(deployment, smtp=smtp)
    with TestClient(app) as client:
        r = client.post("/contact", data={"name": "Bo", "email": "bo@x.org",
                                          "body": "hello"})
    assert r.status_code == 200
    with open(deployment.ws.contact_log_path, encoding="utf-8") as fh:
        assert json.loads(fh.readline())["name"] == "Bo"


# -------------------------------------------------------------------- risk


def test_risk_at_segment_midpoint(served):
    client, _, dep = served
    r = client.get("/api/risk", params={"lat": RA_MID.lat, "lon": RA_MID.lon})
    assert r.status_code == 200
    doc = r.json()
    assert doc["cell_id"] == cell_of(RA_MID, dep.context.grid).token()
    assert doc["at"] == "2020-12-31T11:00:00Z"  # next full hour
    assert 0.0 <= doc["baseline_score"] <= 1.0
    near = doc["nearest_segment"]
    assert near["id"] == "RA#0"
    assert near["distance_m"] < 50.0
    assert 0.0 <= near["segment_score"] <= 1.0
    assert set(doc["weather"]) >= {"valid_at", "temp_c", "precip_mm", "source"}
    assert doc["sources"] == ["climatology"] * 24


def test_risk_far_from_roads_has_no_segment(served):
    client, _, _ = served
    doc = client.get("/api/risk", params={"lat": NO_ROADS.lat,
                                          "lon": NO_ROADS.lon}).json()
    assert doc["nearest_segment"] is None
    assert 0.0 <= doc["baseline_score"] <= 1.0


def test_risk_at_parameter(served):
    client, _, _ = served
    at = "2020-12-31T16:30:00Z"  # inside the window, truncates to 16:00
    doc = client.get("/api/risk", params={"lat": RA_MID.lat, "lon": RA_MID.lon,
                                          "at": at}).json()
    assert doc["at"] == "2020-12-31T16:00:00Z"

    r = client.get("/api/risk", params={"lat": RA_MID.lat, "lon": RA_MID.lon,
                                        "at": "2021-06-01T00:00:00Z"})
    assert r.status_code == 422
    assert r.json()["error"]["fields"] == ["at"]

    r = client.get("/api/risk", params={"lat": RA_MID.lat, "lon": RA_MID.lon,
                                        "at": "yesterday"})
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "VALIDATION"


def test_risk_validation_names_fields(served):
    client, _, _ = served
    r = client.get("/api/risk", params={"lat": 39.5})
    assert r.status_code == 422
    body = r.json()["error"]
    assert body["code"] == "VALIDATION"
    assert "lon" in body["fields"]

    r = client.get("/api/risk", params={"lat": 91.0, "lon": 0.0})
    assert r.status_code == 422
    assert r.json()["error"]["fields"] == ["lat"]


# ---------------------------------------------------------------- timeline


def test_timeline_24_entries(served):
    client, _, dep = served
    r = client.get("/api/timeline", params={"lat": 39.5, "lon": -75.49})
    doc = r.json()
    assert doc["cell_id"] == cell_of(GeoPoint(39.5, -75.49), dep.context.grid).token()
    assert len(doc["entries"]) == 24
    stamps = [to_epoch_hour(datetime.strptime(e["valid_at"], "%Y-%m-%dT%H:%M:%SZ")
                            .replace(tzinfo=UTC)) for e in doc["entries"]]
    assert stamps == list(range(stamps[0], stamps[0] + 24))
    assert stamps[0] == to_epoch_hour(START) + 1
    assert all(0.0 <= e["score"] <= 1.0 for e in doc["entries"])
    assert {e["source"] for e in doc["entries"]} == {"climatology"}


def test_timeline_outside_coverage(served):
    client, _, _ = served
    doc = client.get("/api/timeline", params={"lat": FAR_AWAY.lat,
                                              "lon": FAR_AWAY.lon}).json()
    assert doc == {"cell_id": None, "entries": [], "note": "no_coverage"}


# ------------------------------------------------------------------- roads


def test_roads_bbox_returns_active_segments(served):
    client, _, dep = served
    r = client.get("/api/roads", params={"min_lat": 39.4, "min_lon": -75.6,
                                         "max_lat": 39.6, "max_lon": -75.4})
    doc = r.json()
    assert doc["count"] == len(doc["segments"]) == 2
    assert [s["id"] for s in doc["segments"]] == ["RA#0", "RB#0"]
    assert doc["truncated"] is False
    assert doc["hour_offset"] == 0
    assert doc["generated_at"] == "2020-12-31T10:00:00Z"
    for seg in doc["segments"]:
        assert 0.0 <= seg["score"] <= 1.0
        assert all(len(pair) == 2 for pair in seg["coords"])


def test_roads_bbox_filters_spatially(served):
    client, _, _ = served
    doc = client.get("/api/roads", params={"min_lat": 39.49, "min_lon": -75.51,
                                           "max_lat": 39.51,
                                           "max_lon": -75.48}).json()
    assert [s["id"] for s in doc["segments"]] == ["RA#0"]


def test_roads_validation(served):
    client, _, _ = served
    r = client.get("/api/roads", params={"min_lat": 40.0, "min_lon": -75.6,
                                         "max_lat": 39.0, "max_lon": -75.4})
    assert r.status_code == 422
    r = client.get("/api/roads", params={"min_lat": 39.4, "min_lon": -75.6,
                                         "max_lat": 39.6, "max_lon": -75.4,
                                         "hour_offset": 24})
    assert r.status_code == 422
    assert r.json()["error"]["fields"] == ["hour_offset"]


def test_roads_truncation_cap(deployment):
    app, _ = make_app(deployment, max_results=1)
    with TestClient(app) as client:
        doc = client.get("/api/roads",
                         params={"min_lat": 39.4, "min_lon": -75.6,
                                 "max_lat": 39.6, "max_lon": -75.4}).json()
    assert doc["count"] == 1
    assert doc["truncated"] is True


# ---------------------------------------------------------- segment detail


def test_segment_detail(served):
    client, _, dep = served
    doc = client.get("/api/segments/RA%230").json()
    assert doc["id"] == "RA#0"
    assert doc["class"] == "primary"
    assert doc["length_m"] > 100.0
    assert len(doc["geometry"]) >= 2
    hist = doc["history"]
    assert hist["total"] == 2
    assert len(hist["same_how"]) == 168
    # Thu 2020-03-05 08:00 -> 3*24+8, Sun 2020-05-10 17:00 -> 6*24+17
    assert hist["same_how"][80] == 1 and hist["same_how"][161] == 1
    assert sum(hist["same_how"]) == 2
    assert hist["severity_mean"] == pytest.approx(2.5)
    assert hist["last_at"] == "2020-05-10T17:00:00Z"
    assert len(doc["series"]) == 24
    assert doc["series"][0]["valid_at"] == "2020-12-31T11:00:00Z"
    assert all(e["source"] == "climatology" for e in doc["series"])


def test_segment_detail_not_found(served):
    client, _, _ = served
    for sid in ("RC#0", "missing#1"):
        r = client.get(f"/api/segments/{quote(sid, safe='')}")
        assert r.status_code == 404
        assert r.json()["error"]["code"] == "SEGMENT_NOT_FOUND"


# ------------------------------------------------------------------- tiles


def test_overlay_tile_bytes_and_cache_header(served):
    client, _, dep = served
    tile, _ = tile_for(GeoPoint(39.5, -75.49), 10)
    url = f"/tiles/overlay/80/{tile.z}/{tile.x}/{tile.y}.png"
    r = client.get(url)
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    assert r.content[:8] == b"\x89PNG\r\n\x1a\n"
    assert r.headers["cache-control"] == "public, max-age=3600"
    assert r.content == render_raster_tile(tile, dep.overlay, 80)
    assert client.get(url).content == r.content  # served from cache


def test_overlay_tile_validation(served):
    client, _, _ = served
    r = client.get("/tiles/overlay/168/10/297/389.png")
    assert r.status_code == 422
    assert r.json()["error"]["fields"] == ["how"]
    r = client.get("/tiles/overlay/0/1/5/0.png")  # x out of range at z=1
    assert r.status_code == 422
    assert set(r.json()["error"]["fields"]) == {"z", "x", "y"}


def test_cache_max_age_counts_down(served):
    client, clock, _ = served
    tile, _ = tile_for(GeoPoint(39.5, -75.49), 10)
    clock.advance(600)
    r = client.get(f"/tiles/overlay/0/{tile.z}/{tile.x}/{tile.y}.png")
    assert r.headers["cache-control"] == "public, max-age=3000"


def test_road_tile_json(served):
    client, _, _ = served
    tile, _ = tile_for(RA_MID, 12)
    r = client.get(f"/tiles/roads/3/{tile.z}/{tile.x}/{tile.y}.json")
    assert r.status_code == 200
    doc = r.json()
    assert doc["tile"] == {"z": tile.z, "x": tile.x, "y": tile.y}
    assert doc["hour_offset"] == 3
    ids = [s["id"] for s in doc["segments"]]
    assert "RA#0" in ids and ids == sorted(ids)
    assert "cache-control" in r.headers


def test_road_tile_zoom_and_hour_limits(served):
    client, _, _ = served
    tile, _ = tile_for(RA_MID, 8)
    doc = client.get(f"/tiles/roads/0/{tile.z}/{tile.x}/{tile.y}.json").json()
    assert doc["segments"] == []
    assert doc["note"] == "zoom_too_low"
    r = client.get("/tiles/roads/24/12/1188/1558.json")
    assert r.status_code == 422


# ---------------------------------------------------------- meta, stations


def test_meta_document(served):
    client, _, dep = served
    doc = client.get("/api/meta").json()
    assert doc["models"]["baseline"]["digest"] == bundle_digest(dep.baseline)
    assert doc["models"]["baseline"]["digest"] == sha256_file(
        dep.ws.baseline_bundle_path)
    assert doc["models"]["segment"]["digest"] == bundle_digest(dep.segment_model)
    assert doc["models"]["baseline"]["trained_at"] == "2020-06-15T10:00:00Z"
    assert doc["overlay"]["n_cells"] == len(dep.cells)
    assert doc["forecast"]["horizon"] == 24
    assert doc["forecast"]["segments"] == 2
    assert doc["forecast"]["generated_at"] == "2020-12-31T10:00:00Z"
    assert doc["last_refresh_error"] is None
    assert doc["provider_health"] == {}
    assert doc["grid"]["resolution_deg"] == pytest.approx(0.2)
    assert doc["counts"] == {"segments": 3, "active_segments": 2,
                             "candidates": len(dep.cells), "stations": 2}
    assert isinstance(doc["snapshot_id"], int)


def test_stations_listing(served):
    client, _, dep = served
    doc = client.get("/api/stations").json()
    assert doc["count"] == 2
    by_id = {s["id"]: s for s in doc["stations"]}
    assert by_id["ST00"]["assigned_cells"] == len(dep.station_map)
    assert by_id["ST01"]["assigned_cells"] == 0
    assert by_id["ST00"]["lat"] == pytest.approx(39.5)


def test_health_ok(served):
    client, _, _ = served
    doc = client.get("/health").json()
    assert doc == {"status": "ok", "model_loaded": True,
                   "overlay_loaded": True, "forecast_age_s": 0.0}


# ----------------------------------------------------------------- refresh


def _wait_for(predicate, timeout_s=5.0):
    deadline = time.time() + timeout_s
    while time.time() < deadline:
        if predicate():
            return True
        time.sleep(0.02)
    return False


def test_refresh_requires_token(served):
    client, _, _ = served
    r = client.post("/api/refresh")
    assert r.status_code == 403
    assert r.json()["error"]["code"] == "FORBIDDEN"
    r = client.post("/api/refresh", headers={"X-Admin-Token": "wrong"})
    assert r.status_code == 403


def test_refresh_rebuilds_forecast(served):
    client, clock, _ = served
    clock.advance(4000)
    r = client.post("/api/refresh", headers={"X-Admin-Token": TOKEN})
    assert r.status_code == 202
    body = r.json()
    assert body["status"] == "started"
    assert body["build_id"] >= 1

    expected = format_rfc3339(from_epoch_hour(to_epoch_hour(clock())))
    assert _wait_for(lambda: client.get("/api/meta").json()["forecast"]
                     ["generated_at"] == expected)
    assert client.get("/api/meta").json()["last_refresh_error"] is None


def test_refresh_reports_already_building(served):
    client, _, _ = served
    state = client.app.state.rr
    with state._build_lock:
        state._building = True
    try:
        body = client.post("/api/refresh",
                           headers={"X-Admin-Token": TOKEN}).json()
        assert body["status"] == "already_building"
    finally:
        with state._build_lock:
            state._building = False


def test_stale_forecast_refreshes_lazily(served):
    client, clock, _ = served
    before = client.get("/api/meta").json()["forecast"]["generated_at"]
    clock.advance(7200)  # stale: past the 3600s interval
    doc = client.get("/api/roads", params={"min_lat": 39.4, "min_lon": -75.6,
                                           "max_lat": 39.6,
                                           "max_lon": -75.4}).json()
    assert doc["generated_at"] in (before, format_rfc3339(
        from_epoch_hour(to_epoch_hour(clock()))))  # non-blocking: old is fine
    expected = format_rfc3339(from_epoch_hour(to_epoch_hour(clock())))
    assert _wait_for(lambda: client.get("/api/meta").json()["forecast"]
                     ["generated_at"] == expected)


def test_no_torn_reads_across_refreshes(served):
    client, clock, _ = served
    errors = []
    seen = {}
    stop = threading.Event()

    def reader():
        while not stop.is_set():
            meta = client.get("/api/meta").json()
            fc = meta["forecast"]
            if fc is None:
                errors.append("forecast vanished")
                continue
            seen.setdefault(meta["snapshot_id"], set()).add(fc["generated_at"])
            roads = client.get("/api/roads",
                               params={"min_lat": 39.4, "min_lon": -75.6,
                                       "max_lat": 39.6, "max_lon": -75.4}).json()
            if roads["count"] != len(roads["segments"]):
                errors.append("count mismatch")

    threads = [threading.Thread(target=reader) for _ in range(4)]
    for t in threads:
        t.start()
    try:
        for _ in range(8):
            clock.advance(4000)
            client.post("/api/refresh", headers={"X-Admin-Token": TOKEN})
            time.sleep(0.05)
    finally:
        stop.set()
        for t in threads:
            t.join(timeout=5)
    assert not errors
    assert len(seen) >= 2  # refreshes actually swapped snapshots
    for snapshot_id, stamps in seen.items():
        assert len(stamps) == 1, f"snapshot {snapshot_id} showed {stamps}"


# ------------------------------------------------------- degraded operation


def test_live_provider_feeds_all_endpoints(deployment):
    clock_holder = {}

    def live_get(url, timeout_s):
        now = clock_holder["clock"]()
        start = to_epoch_hour(now) + 1
        hours = [{"valid_at": format_rfc3339(from_epoch_hour(h)),
                  "temp_c": 21.5, "dewpoint_c": 9.0, "rel_humidity": 0.5,
                  "wind_ms": 2.0, "precip_mm": 0.0}
                 for h in range(start, start + 30)]
        return 200, json.dumps({"hours": hours})

    providers = [{"name": "met-main", "base_url": "http://upstream.test",
                  "priority": 0}]
    app, clock = make_app(deployment, providers=providers, http_get=live_get)
    clock_holder["clock"] = clock
    with TestClient(app) as client:
        risk = client.get("/api/risk", params={"lat": RA_MID.lat,
                                               "lon": RA_MID.lon}).json()
        assert risk["sources"] == ["live-primary"] * 24
        assert risk["weather"]["temp_c"] == pytest.approx(21.5)
        meta = client.get("/api/meta").json()
        assert meta["provider_health"]["met-main"]["status"] == "ok"
        detail = client.get("/api/segments/RA%230").json()
        assert {e["source"] for e in detail["series"]} == {"live-primary"}


def test_missing_overlay_degrades(deployment):
    os.remove(deployment.ws.overlay_path)
    app, _ = make_app(deployment)
    with TestClient(app) as client:
        health = client.get("/health").json()
        assert health["status"] == "degraded"
        assert health["overlay_loaded"] is False
        r = client.get("/tiles/overlay/0/10/297/389.png")
        assert r.status_code == 503
        assert r.json()["error"]["code"] == "OVERLAY_UNAVAILABLE"
        meta = client.get("/api/meta").json()
        assert meta["overlay"] is None
        assert meta["startup_warnings"]
        # road data is unaffected
        assert client.get("/api/segments/RA%230").status_code == 200


def test_no_weather_coverage_degrades(deployment):
    context = load_context(deployment.ws.context_path)
    bare = dataclasses.replace(context, climatology=Climatology({}))
    save_context(bare, deployment.ws.context_path)
    app, _ = make_app(deployment)
    with TestClient(app) as client:
        health = client.get("/health").json()
        assert health["status"] == "degraded"
        assert health["forecast_age_s"] is None

        meta = client.get("/api/meta").json()
        assert meta["forecast"] is None
        assert "NoWeatherError" in meta["last_refresh_error"]

        doc = client.get("/api/roads", params={"min_lat": 39.4,
                                               "min_lon": -75.6,
                                               "max_lat": 39.6,
                                               "max_lon": -75.4}).json()
        assert doc == {"segments": [], "count": 0, "truncated": False,
                       "hour_offset": 0, "generated_at": None,
                       "note": "forecast_unavailable"}

        tile_doc = client.get("/tiles/roads/0/12/1188/1558.json").json()
        assert tile_doc["note"] == "forecast_unavailable"

        detail = client.get("/api/segments/RA%230").json()
        assert detail["series"] == []
        assert detail["note"] == "forecast_unavailable"

        r = client.get("/api/risk", params={"lat": RA_MID.lat,
                                            "lon": RA_MID.lon})
        assert r.status_code == 503
        assert r.json()["error"]["code"] == "NO_WEATHER"


def test_unexpected_error_returns_envelope(deployment):
    app, _ = make_app(deployment)
    with TestClient(app, raise_server_exceptions=False) as client:
        state = client.app.state.rr

        def boom(q, horizon):
            raise RuntimeError("boom")

        state.chain.get_point_forecast = boom
        r = client.get("/api/risk", params={"lat": 39.5, "lon": -75.5})
        assert r.status_code == 500
        assert r.json() == {"error": {"code": "INTERNAL",
                                      "message": "internal error"}}
