"""Shared fixtures: a small but complete deployed workspace."""

import os
from datetime import datetime, timezone
from types import SimpleNamespace

import pytest

from roadrisk.cellgrid import GridSpec, cell_of
from roadrisk.common import dump_json
from roadrisk.config import Workspace
from roadrisk.features import (BASELINE_FEATURE_NAMES, SEGMENT_FEATURE_NAMES,
                               Context, build_history, save_context)
from roadrisk.geo import GeoPoint, Polyline
from roadrisk.ingest import ClimBucket, Climatology, RoadFeature, Station
from roadrisk.model import ModelBundle, save_bundle
from roadrisk.overlay import build_weekly_overlay, save_overlay
from roadrisk.segments import save_segments, segment_road

UTC = timezone.utc
GRID = GridSpec(0.2)
TRAINED_AT = "2020-06-15T10:00:00Z"


def toy_climatology(sids=("ST00", "ST01")):
    table = {}
    for sid in sids:
        for month in range(1, 13):
            for hour in range(24):
                table[(sid, month, hour)] = ClimBucket(
                    {"temp_c": 10.0 + hour * 0.1, "dewpoint_c": 5.0,
                     "rel_humidity": 0.7, "wind_ms": 3.0,
                     "precip_mm": 0.2 if hour % 6 == 0 else 0.0},
                    {}, 0.1)
    return Climatology(table)


def toy_model(layer: str, weight_on: str | None = None, weight: float = 1.0,
              bias: float = 0.0) -> ModelBundle:
    names = BASELINE_FEATURE_NAMES if layer == "baseline" else SEGMENT_FEATURE_NAMES
    weights = [0.0] * len(names)
    if weight_on is not None:
        weights[names.index(weight_on)] = weight
    return ModelBundle(list(names), weights, bias, [0.0] * len(names),
                       [1.0] * len(names),
                       meta={"layer": layer, "trained_at": TRAINED_AT})


def build_deployment(root: str) -> SimpleNamespace:
    """Models, segments store, context, and overlay under a fresh workspace."""
    ws = Workspace(root)
    for d in (ws.data_dir, ws.work_dir, ws.models_dir, ws.overlay_dir,
              ws.forecast_dir, ws.reports_dir):
        os.makedirs(d, exist_ok=True)

    roads = [
        RoadFeature("RA", "primary", Polyline(
            [GeoPoint(39.50, -75.50), GeoPoint(39.50, -75.4955)])),
        RoadFeature("RB", "secondary", Polyline(
            [GeoPoint(39.52, -75.52), GeoPoint(39.5235, -75.52)])),
        RoadFeature("RC", "other", Polyline(
            [GeoPoint(39.70, -75.70), GeoPoint(39.703, -75.70)])),
    ]
    segments = [s for road in roads for s in segment_road(road)]
    save_segments(segments, ws.segments_path)

    # RA and RB are active; RC never matched an event
    active = [s for s in segments if s.road_id in ("RA", "RB")]
    by_id = {s.segment_id: s for s in segments}
    seg_events = []
    for seg in active:
        seg_events.append((seg.segment_id,
                           datetime(2020, 3, 5, 8, tzinfo=UTC), 2))
        seg_events.append((seg.segment_id,
                           datetime(2020, 5, 10, 17, tzinfo=UTC), 3))
    cell_events = [(cell_of(by_id[sid].midpoint, GRID), t)
                   for sid, t, _ in seg_events]
    history = build_history(cell_events, seg_events,
                            (datetime(1900, 1, 1, tzinfo=UTC),
                             datetime(2021, 1, 1, tzinfo=UTC)))

    cells = sorted({cell_of(s.midpoint, GRID) for s in segments})
    stations = [Station("ST00", GeoPoint(39.5, -75.5), "alpha"),
                Station("ST01", GeoPoint(39.7, -75.7), "beta")]
    station_map = {c: "ST00" for c in cells}
    climatology = toy_climatology()
    context = Context(grid=GRID, eval_year=2020, weather_mode="observed",
                      candidates=cells, station_map=station_map,
                      stations=stations, climatology=climatology,
                      history=history, hours=(438000, 447000),
                      counts={"incidents": len(seg_events)})
    save_context(context, ws.context_path)

    baseline = toy_model("baseline", weight_on="cell_total_log",
                         weight=0.8, bias=-0.5)
    segment_model = toy_model("segment", weight_on="seg_total_log",
                              weight=0.6, bias=-0.4)
    save_bundle(baseline, ws.baseline_bundle_path)
    save_bundle(segment_model, ws.segment_bundle_path)

    tensor = build_weekly_overlay(cells, history, climatology, station_map,
                                  baseline, GRID)
    save_overlay(tensor, ws.overlay_path)

    dump_json({"seed": 42, "service": {"providers": []}},
              os.path.join(root, "config.json"), indent=1)
    with open(os.path.join(root, "README.md"), "w", encoding="utf-8") as fh:
        fh.write("deployment scratch tree\n")

    return SimpleNamespace(ws=ws, roads=roads, segments=segments,
                           active=active, history=history, cells=cells,
                           stations=stations, station_map=station_map,
                           climatology=climatology, context=context,
                           baseline=baseline, segment_model=segment_model,
                           overlay=tensor)


@pytest.fixture
def deployment(tmp_path):
    return build_deployment(str(tmp_path / "ws"))
