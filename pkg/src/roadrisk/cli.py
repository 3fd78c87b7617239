"""Command line entrypoint: one subcommand per pipeline stage.

Every stage reads and writes a fixed layout under the --out workspace and
drops a JSON run report beside its outputs. Reports carry input/output
digests plus a digest over their own deterministic core, so identical
inputs are provable from the reports alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

from .bundle import build_runtime_bundle, verify_bundle
from .cellgrid import GridSpec, cell_bbox, cell_of
from .common import (DetRng, RoadRiskError, dump_json, format_rfc3339,
                     from_epoch_hour, parse_rfc3339, sha256_bytes,
                     sha256_file)
from .config import Config, Workspace, load_config
from .features import (Context, assemble_baseline, assemble_segment,
                       load_context, read_examples, save_context,
                       write_examples)
from .geo import GeoPoint, TileCoord, tile_for
from .ingest import (InputError, build_climatology, load_incidents,
                     load_roads, load_stations, load_weather,
                     parse_incidents, parse_roads, parse_stations,
                     parse_weather, save_incidents, save_roads,
                     save_stations, save_weather)
from .model import TrainConfig, evaluate, load_bundle, save_bundle, train_logistic
from .overlay import (build_road_forecast, build_weekly_overlay, load_overlay,
                      render_raster_tile, save_overlay)
from .segments import SegmentIndex, load_segments, match_events, save_segments, segment_road
from .synth import WorldSpec, generate
from .weather_live import WeatherChain, apply_env_overrides

MAX_PRERENDERED_TILES = 10_000


class Reporter:
    """Collects inputs/outputs/counts for one stage's run report.

    The report digest covers only the deterministic core (subcommand,
    relative paths, file digests, counts), never wall-clock fields, so a
    rerun over identical inputs produces an identical digest.
    """

    def __init__(self, ws: Workspace, subcommand: str):
        self.ws = ws
        self.subcommand = subcommand
        self.inputs: dict = {}
        self.outputs: dict = {}
        self.counts: dict = {}
        self._started = time.perf_counter()

    def _rel(self, path: str) -> str:
        rel = os.path.relpath(path, self.ws.root)
        return rel.replace(os.sep, "/")

    def add_input(self, path: str):
        self.inputs[self._rel(path)] = sha256_file(path)

    def add_output(self, path: str):
        self.outputs[self._rel(path)] = sha256_file(path)

    def write(self) -> dict:
        core = {"subcommand": self.subcommand, "inputs": self.inputs,
                "outputs": self.outputs, "counts": self.counts}
        digest = sha256_bytes(dump_json(core).encode("utf-8"))
        doc = dict(core)
        doc["digest"] = digest
        doc["duration_s"] = round(time.perf_counter() - self._started, 3)
        os.makedirs(self.ws.reports_dir, exist_ok=True)
        dump_json(doc, self.ws.report_path(self.subcommand), indent=1)
        return doc


def _load(args) -> tuple:
    ws = Workspace(args.out)
    config_path = args.config
    if config_path is None:
        default = os.path.join(ws.root, "config.json")
        if os.path.exists(default):
            config_path = default
    config = load_config(config_path)
    if getattr(args, "seed", None) is not None:
        config.pipeline.seed = args.seed
        config.pipeline.train.seed = args.seed
    return ws, config


def _ensure_dirs(ws: Workspace, *dirs):
    for d in dirs:
        os.makedirs(d, exist_ok=True)


def _print_report(doc: dict):
    print(dump_json({"subcommand": doc["subcommand"], "counts": doc["counts"],
                     "digest": doc["digest"],
                     "duration_s": doc["duration_s"]}))


# ------------------------------------------------------------------ stages


def cmd_synth(args) -> int:
    spec = WorldSpec()
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            spec = WorldSpec.from_json(json.load(fh))
    if args.seed is not None:
        spec.seed = args.seed
    summary = generate(spec, args.out)
    print(dump_json(summary))
    return 0


def cmd_ingest(args) -> int:
    ws, config = _load(args)
    for path in (ws.incidents_path, ws.stations_path, ws.weather_path,
                 ws.roads_path):
        if not os.path.exists(path):
            raise InputError(f"missing input file: {path}")
    _ensure_dirs(ws, ws.work_dir, ws.reports_dir)
    rep = Reporter(ws, "ingest")
    for path in (ws.incidents_path, ws.stations_path, ws.weather_path,
                 ws.roads_path):
        rep.add_input(path)

    years = config.pipeline.years
    incidents, inc_rej = parse_incidents(ws.incidents_path, years=years)
    stations, st_rej = parse_stations(ws.stations_path)
    weather, w_rej = parse_weather(ws.weather_path)
    roads, r_rej = parse_roads(ws.roads_path)

    save_incidents(incidents, ws.clean_incidents_path)
    save_stations(stations, ws.clean_stations_path)
    save_weather(weather, ws.clean_weather_path)
    save_roads(roads, ws.clean_roads_path)

    counts = {
        "incidents": {"kept": len(incidents), "rejected": len(inc_rej),
                      "parsed": len(incidents) + len(inc_rej)},
        "stations": {"kept": len(stations), "rejected": len(st_rej),
                     "parsed": len(stations) + len(st_rej)},
        "weather": {"kept": len(weather), "rejected": len(w_rej),
                    "parsed": len(weather) + len(w_rej)},
        "roads": {"kept": len(roads), "rejected": len(r_rej),
                  "parsed": len(roads) + len(r_rej)},
    }
    rejections = {
        "incidents": [{"line": r.line_no, "reason": r.reason} for r in inc_rej],
        "stations": [{"line": r.line_no, "reason": r.reason} for r in st_rej],
        "weather": [{"line": r.line_no, "reason": r.reason} for r in w_rej],
        "roads": [{"line": r.line_no, "reason": r.reason} for r in r_rej],
    }
    dump_json({"counts": counts, "rejections": rejections},
              ws.ingest_counts_path, indent=1)

    for path in (ws.clean_incidents_path, ws.clean_stations_path,
                 ws.clean_weather_path, ws.clean_roads_path,
                 ws.ingest_counts_path):
        rep.add_output(path)
    rep.counts = {name: c["kept"] for name, c in counts.items()}
    rep.counts["rejected"] = sum(c["rejected"] for c in counts.values())
    _print_report(rep.write())
    return 0


def cmd_build_dataset(args) -> int:
    ws, config = _load(args)
    p = config.pipeline
    _ensure_dirs(ws, ws.work_dir, ws.reports_dir)
    rep = Reporter(ws, "build-dataset")
    for path in (ws.clean_incidents_path, ws.clean_stations_path,
                 ws.clean_weather_path):
        rep.add_input(path)

    incidents = load_incidents(ws.clean_incidents_path)
    stations = load_stations(ws.clean_stations_path)
    weather = load_weather(ws.clean_weather_path)
    grid = GridSpec(p.grid_resolution_deg)
    eval_year = p.eval_year or max(r.at.year for r in incidents)

    ds = assemble_baseline(incidents, stations, weather, grid, ring=p.ring,
                           k=p.negative_ratio, seed=p.seed,
                           eval_year=eval_year, max_stations=p.max_stations,
                           weather_mode=p.weather_mode)
    write_examples(ws.baseline_train_path, ds.names, ds.train,
                   key_of=lambda ex: ex.cell.token())
    write_examples(ws.baseline_eval_path, ds.names, ds.eval,
                   key_of=lambda ex: ex.cell.token())

    context = Context(grid=grid, eval_year=eval_year,
                      weather_mode=p.weather_mode, candidates=ds.candidates,
                      station_map=ds.station_map, stations=ds.stations,
                      climatology=ds.climatology, history=ds.history,
                      hours=ds.hours,
                      counts={"incidents": len(incidents),
                              "train_examples": len(ds.train),
                              "eval_examples": len(ds.eval)})
    save_context(context, ws.context_path)

    for path in (ws.baseline_train_path, ws.baseline_eval_path,
                 ws.context_path):
        rep.add_output(path)
    rep.counts = {
        "incidents": len(incidents),
        "candidates": len(ds.candidates),
        "stations_selected": len(ds.stations),
        "train_examples": len(ds.train),
        "train_positives": sum(ex.label for ex in ds.train),
        "train_negatives": sum(1 - ex.label for ex in ds.train),
        "eval_examples": len(ds.eval),
        "eval_positives": sum(ex.label for ex in ds.eval),
        "eval_negatives": sum(1 - ex.label for ex in ds.eval),
        "eval_year": eval_year,
    }
    _print_report(rep.write())
    return 0


def _internal_holdout(train_rows, seed: int):
    """Carve a diagnostic holdout out of the training rows.

    Preferred split: the last calendar year inside the training window.  Rows
    there share history tables with the rows the model is fitted on, so a
    recurring segment is easy to recognize; the resulting score describes the
    pipeline's internal separability, not deployment skill.  Single-year
    datasets fall back to a seeded one-in-five row split.
    """
    years = sorted({from_epoch_hour(r[1]).year for r in train_rows})
    if len(years) >= 2:
        hold_year = years[-1]
        fit = [r for r in train_rows if from_epoch_hour(r[1]).year < hold_year]
        hold = [r for r in train_rows if from_epoch_hour(r[1]).year == hold_year]
        return fit, hold, {"kind": "internal_year_holdout", "year": hold_year}
    rng = DetRng(seed)
    idx = list(range(len(train_rows)))
    for i in range(len(idx) - 1, 0, -1):
        j = rng.randint(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    cut = max(1, len(idx) // 5)
    held = set(idx[:cut])
    fit = [r for i, r in enumerate(train_rows) if i not in held]
    hold = [r for i, r in enumerate(train_rows) if i in held]
    return fit, hold, {"kind": "internal_random_holdout", "fraction": 0.2}


def _train_layer(ws: Workspace, config: Config, layer: str, train_path: str,
                 eval_path: str, bundle_path: str, subcommand: str) -> int:
    rep = Reporter(ws, subcommand)
    rep.add_input(train_path)
    rep.add_input(eval_path)
    _ensure_dirs(ws, ws.models_dir, ws.reports_dir)

    names, train_rows = read_examples(train_path)
    _, eval_rows = read_examples(eval_path)
    if not train_rows:
        raise InputError(f"{train_path}: no training rows")

    # The two layers report different splits on purpose.  The grid model's
    # stored metric is the final-year evaluation, which sees only pre-final
    # history and is the honest number.  The segment model's stored metric is
    # an internal holdout: same pipeline, shared history tables, much easier,
    # and kept as a diagnostic of separability rather than a skill claim.
    split: dict
    if layer == "segment" and len(train_rows) > 1:
        fit_rows, metric_rows, split = _internal_holdout(
            train_rows, config.pipeline.seed)
    else:
        fit_rows, metric_rows = train_rows, eval_rows
        split = {"kind": "final_year_eval"}
    if not fit_rows:
        raise InputError(f"{train_path}: internal holdout leaves no rows to fit")

    # trained_at is derived from the data window so reruns are byte-identical
    last_hour = max(r[1] for r in fit_rows)
    meta = {"layer": layer,
            "trained_at": format_rfc3339(from_epoch_hour(last_hour)),
            "eval_year": load_context(ws.context_path).eval_year
            if os.path.exists(ws.context_path) else None,
            "metric_split": split}
    bundle = train_logistic([r[3] for r in fit_rows], [r[2] for r in fit_rows],
                            names, config.pipeline.train, meta=meta)
    if metric_rows:
        bundle = dataclasses.replace(
            bundle, metrics=evaluate(bundle, [r[3] for r in metric_rows],
                                     [r[2] for r in metric_rows]))
    if layer == "segment" and eval_rows:
        final = evaluate(bundle, [r[3] for r in eval_rows],
                         [r[2] for r in eval_rows])
        bundle.meta["final_year_eval"] = final.to_json()
    save_bundle(bundle, bundle_path)
    rep.add_output(bundle_path)

    metrics_path = bundle_path[:-len(".json")] + ".metrics.json"
    dump_json({"layer": layer, "split": split,
               "metrics": bundle.metrics.to_json() if bundle.metrics else None},
              metrics_path, indent=1)
    rep.add_output(metrics_path)

    y = [r[2] for r in fit_rows]
    rep.counts = {
        "train_examples": len(fit_rows),
        "train_positives": sum(y),
        "train_negatives": len(y) - sum(y),
        "metric_examples": len(metric_rows),
        "metric_split": split["kind"],
        "features": len(names),
    }
    if bundle.metrics:
        rep.counts["auroc"] = round(bundle.metrics.auroc, 6)
        rep.counts["ap"] = round(bundle.metrics.average_precision, 6)
    _print_report(rep.write())
    return 0


def cmd_train_baseline(args) -> int:
    ws, config = _load(args)
    return _train_layer(ws, config, "baseline", ws.baseline_train_path,
                        ws.baseline_eval_path, ws.baseline_bundle_path,
                        "train-baseline")


def cmd_train_segment(args) -> int:
    ws, config = _load(args)
    return _train_layer(ws, config, "segment", ws.segment_train_path,
                        ws.segment_eval_path, ws.segment_bundle_path,
                        "train-segment")


def cmd_build_segments(args) -> int:
    ws, config = _load(args)
    _ensure_dirs(ws, ws.work_dir, ws.reports_dir)
    rep = Reporter(ws, "build-segments")
    rep.add_input(ws.clean_roads_path)

    roads = load_roads(ws.clean_roads_path)
    max_len = config.pipeline.max_segment_len_m
    segments = [s for road in roads for s in segment_road(road, max_len)]
    save_segments(segments, ws.segments_path,
                  extra={"max_segment_len_m": max_len})

    rep.add_output(ws.segments_path)
    rep.counts = {"roads": len(roads), "segments": len(segments),
                  "degenerate": sum(1 for s in segments if s.degenerate)}
    _print_report(rep.write())
    return 0


def cmd_match_events(args) -> int:
    ws, config = _load(args)
    _ensure_dirs(ws, ws.work_dir, ws.reports_dir)
    rep = Reporter(ws, "match-events")
    rep.add_input(ws.clean_incidents_path)
    rep.add_input(ws.segments_path)

    incidents = load_incidents(ws.clean_incidents_path)
    segments, _ = load_segments(ws.segments_path)
    idx = SegmentIndex(segments)
    cutoff = config.pipeline.match_cutoff_m
    results, stats = match_events([(r.id, r.loc) for r in incidents], idx,
                                  cutoff_m=cutoff)

    with open(ws.matches_path, "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(json.dumps({"event_id": res.event_id,
                                 "segment_id": res.segment_id,
                                 "distance_m": res.distance_m},
                                sort_keys=True) + "\n")
    stats_doc = stats.to_json()
    stats_doc["cutoff_m"] = cutoff
    dump_json(stats_doc, ws.match_stats_path, indent=1)

    rep.add_output(ws.matches_path)
    rep.add_output(ws.match_stats_path)
    rep.counts = {"events": len(results), "matched": stats.matched,
                  "unmatched": len(results) - stats.matched}
    _print_report(rep.write())
    return 0


def cmd_build_segment_events(args) -> int:
    ws, config = _load(args)
    p = config.pipeline
    _ensure_dirs(ws, ws.work_dir, ws.reports_dir)
    rep = Reporter(ws, "build-segment-events")
    for path in (ws.matches_path, ws.clean_incidents_path, ws.segments_path,
                 ws.clean_weather_path, ws.context_path):
        rep.add_input(path)

    incidents = load_incidents(ws.clean_incidents_path)
    by_event = {r.id: r for r in incidents}
    matched = []
    with open(ws.matches_path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            if row["segment_id"] is None:
                continue
            event = by_event.get(row["event_id"])
            if event is None:
                raise InputError(
                    f"matched event {row['event_id']!r} missing from incidents")
            matched.append((row["segment_id"], event.at, event.severity))
    segments, _ = load_segments(ws.segments_path)
    weather = load_weather(ws.clean_weather_path)
    context = load_context(ws.context_path)

    cell_events = [(cell_of(r.loc, context.grid), r.at) for r in incidents]
    ds = assemble_segment(matched, segments, context.grid,
                          context.station_map, context.stations,
                          context.climatology, weather, k=p.negative_ratio,
                          seed=p.seed, eval_year=context.eval_year,
                          weather_mode=context.weather_mode,
                          cell_events=cell_events)
    write_examples(ws.segment_train_path, ds.names, ds.train,
                   key_of=lambda ex: ex.segment_id)
    write_examples(ws.segment_eval_path, ds.names, ds.eval,
                   key_of=lambda ex: ex.segment_id)

    # the context carries segment history forward to the overlay and service
    counts = dict(context.counts)
    counts.update(matched_events=len(matched),
                  segment_train_examples=len(ds.train),
                  segment_eval_examples=len(ds.eval))
    enriched = dataclasses.replace(context, history=ds.history, counts=counts)
    save_context(enriched, ws.context_path)

    for path in (ws.segment_train_path, ws.segment_eval_path,
                 ws.context_path):
        rep.add_output(path)
    rep.counts = {
        "matched_events": len(matched),
        "train_examples": len(ds.train),
        "train_positives": sum(ex.label for ex in ds.train),
        "train_negatives": sum(1 - ex.label for ex in ds.train),
        "eval_examples": len(ds.eval),
    }
    _print_report(rep.write())
    return 0


def cmd_build_overlay(args) -> int:
    ws, config = _load(args)
    _ensure_dirs(ws, ws.overlay_dir, ws.reports_dir)
    rep = Reporter(ws, "build-overlay")
    rep.add_input(ws.context_path)
    rep.add_input(ws.baseline_bundle_path)

    context = load_context(ws.context_path)
    bundle = load_bundle(ws.baseline_bundle_path)
    tensor = build_weekly_overlay(context.candidates, context.history,
                                  context.climatology, context.station_map,
                                  bundle, context.grid,
                                  rep_month=config.pipeline.rep_month)
    save_overlay(tensor, ws.overlay_path)

    rep.add_output(ws.overlay_path)
    rep.add_output(ws.overlay_path + ".meta.json")
    rep.counts = {"cells": len(tensor.cells), "hours": tensor.scores.shape[1]}
    _print_report(rep.write())
    return 0


def cmd_refresh_roads(args) -> int:
    ws, config = _load(args)
    _ensure_dirs(ws, ws.forecast_dir, ws.reports_dir)
    rep = Reporter(ws, "refresh-roads")
    for path in (ws.context_path, ws.segments_path, ws.segment_bundle_path):
        rep.add_input(path)

    context = load_context(ws.context_path)
    segments, _ = load_segments(ws.segments_path)
    bundle = load_bundle(ws.segment_bundle_path)
    if args.now:
        now = parse_rfc3339(args.now)
    else:
        # default anchors to the end of the data window, so offline runs
        # (climatology only) are reproducible
        now = from_epoch_hour(context.hours[1])
    providers = apply_env_overrides(config.service.providers, os.environ)
    chain = WeatherChain(providers, context.climatology, context.station_map,
                         context.stations, context.grid, clock=lambda: now)
    forecast = build_road_forecast(segments, context.history, chain, bundle,
                                   now, context.grid)
    dump_json(forecast.to_json(), ws.forecast_path, indent=1)

    rep.add_output(ws.forecast_path)
    sources = sorted({tag for sf in forecast.segments.values()
                      for tag in sf.sources})
    rep.counts = {"segments": len(forecast.segments),
                  "horizon": forecast.horizon,
                  "weather_sources": sources}
    _print_report(rep.write())
    return 0


def _parse_z_range(text: str) -> range:
    try:
        lo, hi = text.split("..")
        lo, hi = int(lo), int(hi)
    except ValueError as e:
        raise InputError(f"bad --z-range {text!r}, expected like 4..8") from e
    if not 0 <= lo <= hi <= 22:
        raise InputError(f"bad --z-range {text!r}")
    return range(lo, hi + 1)


def cmd_render_tiles(args) -> int:
    ws, _ = _load(args)
    zooms = _parse_z_range(args.z_range)
    hours = [int(h) for h in args.hours.split(",")] if args.hours else [0]
    for how in hours:
        if not 0 <= how < 168:
            raise InputError(f"hour-of-week {how} out of range")
    rep = Reporter(ws, "render-tiles")
    rep.add_input(ws.overlay_path)
    _ensure_dirs(ws, ws.tiles_dir, ws.reports_dir)

    tensor = load_overlay(ws.overlay_path)
    if not tensor.cells:
        raise InputError("overlay has no cells")
    grid = GridSpec(float(tensor.meta.get("grid_resolution_deg", 0.2)))
    boxes = [cell_bbox(c, grid) for c in tensor.cells]
    min_lat = min(b.min_lat for b in boxes)
    max_lat = max(b.max_lat for b in boxes)
    min_lon = min(b.min_lon for b in boxes)
    max_lon = max(b.max_lon for b in boxes)

    jobs = []
    for z in zooms:
        nw, _ = tile_for(GeoPoint(max_lat, min_lon), z)
        se, _ = tile_for(GeoPoint(min_lat, max_lon), z)
        for x in range(nw.x, se.x + 1):
            for y in range(nw.y, se.y + 1):
                jobs.append(TileCoord(z, x, y))
    if len(jobs) * len(hours) > MAX_PRERENDERED_TILES:
        raise InputError(
            f"{len(jobs) * len(hours)} tiles exceed the prerender cap "
            f"({MAX_PRERENDERED_TILES}); narrow --z-range or --hours")

    written = 0
    for how in hours:
        for tile in jobs:
            out_dir = os.path.join(ws.tiles_dir, str(how), str(tile.z),
                                   str(tile.x))
            os.makedirs(out_dir, exist_ok=True)
            png = render_raster_tile(tile, tensor, how)
            with open(os.path.join(out_dir, f"{tile.y}.png"), "wb") as fh:
                fh.write(png)
            written += 1

    rep.counts = {"tiles": written, "zooms": list(zooms),
                  "hours": hours}
    _print_report(rep.write())
    return 0


def cmd_serve(args) -> int:
    ws, config = _load(args)
    from .service import create_app

    try:
        app = create_app(ws, config)
    except RoadRiskError as e:
        print(f"{e.code}: {e}", file=sys.stderr)
        return 1
    import uvicorn

    port = args.port if args.port is not None else config.service.port
    uvicorn.run(app, host=args.host, port=port, log_level="info")
    return 0


def cmd_bundle(args) -> int:
    if args.bundle_command == "build":
        manifest = build_runtime_bundle(args.root, args.bundle_out)
        # the report lives beside the archive, not inside the workspace,
        # so repacking the same tree twice stays byte-identical
        core = {"subcommand": "bundle",
                "inputs": {e["path"]: e["sha256"] for e in manifest.entries},
                "outputs": {os.path.basename(args.bundle_out):
                            sha256_file(args.bundle_out)},
                "counts": {"files": len(manifest.entries),
                           "skipped": len(manifest.skipped),
                           "bytes": sum(e["size"] for e in manifest.entries)}}
        doc = dict(core)
        doc["digest"] = sha256_bytes(dump_json(core).encode("utf-8"))
        dump_json(doc, args.bundle_out + ".report.json", indent=1)
        print(dump_json({"subcommand": "bundle", "counts": core["counts"],
                         "digest": doc["digest"]}))
        return 0
    if args.bundle_command == "verify":
        violations = verify_bundle(args.path)
        doc = {"ok": not violations, "violations": violations}
        print(dump_json(doc))
        return 0 if not violations else 1
    print("usage: roadrisk bundle {build,verify} ...", file=sys.stderr)
    return 2


# -------------------------------------------------------------- dispatcher


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadrisk",
        description="road incident risk pipeline and service")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    def add(name, handler, help_text, workspace=True, seed=False):
        p = sub.add_parser(name, help=help_text)
        if workspace:
            p.add_argument("--out", required=True,
                           help="workspace directory (fixed layout)")
            p.add_argument("--config", default=None,
                           help="config JSON (default: <out>/config.json)")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override the configured seed")
        p.set_defaults(handler=handler)
        return p

    p = add("synth", cmd_synth, "generate a synthetic world",
            workspace=False, seed=True)
    p.add_argument("--spec", default=None, help="world spec JSON")
    p.add_argument("--out", required=True, help="directory for the raw files")

    add("ingest", cmd_ingest, "parse and clean the raw input files")
    add("build-dataset", cmd_build_dataset,
        "cell-hour examples, station assignment, context", seed=True)
    add("train-baseline", cmd_train_baseline, "fit the cell model", seed=True)
    add("build-segments", cmd_build_segments, "split roads into segments")
    add("match-events", cmd_match_events, "snap events to nearest segments")
    add("build-segment-events", cmd_build_segment_events,
        "segment-hour examples and enriched context", seed=True)
    add("train-segment", cmd_train_segment, "fit the segment model",
        seed=True)
    add("build-overlay", cmd_build_overlay, "score the weekly overlay tensor")

    p = add("refresh-roads", cmd_refresh_roads, "build the 24h road forecast")
    p.add_argument("--now", default=None,
                   help="forecast anchor, RFC 3339 (default: end of data)")

    p = add("render-tiles", cmd_render_tiles, "prerender overlay tiles")
    p.add_argument("--z-range", required=True, help="zoom range like 4..8")
    p.add_argument("--hours", default="0",
                   help="comma-separated hours of week (default 0)")

    p = add("serve", cmd_serve, "run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None,
                   help="override the configured port")

    p = sub.add_parser("bundle", help="build or verify a runtime bundle")
    # the handler default must sit on this parser, not the nested ones:
    # argparse applies parent defaults before the nested parser runs, so a
    # nested set_defaults(handler=...) would never take effect
    p.set_defaults(handler=cmd_bundle)
    bundle_sub = p.add_subparsers(dest="bundle_command",
                                  metavar="build|verify")
    b = bundle_sub.add_parser("build", help="pack a workspace")
    b.add_argument("--root", required=True, help="workspace to pack")
    b.add_argument("--out", dest="bundle_out", required=True,
                   help="output .tar.gz path")
    v = bundle_sub.add_parser("verify", help="check a bundle's manifest")
    v.add_argument("--path", required=True, help="bundle .tar.gz path")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = getattr(args, "handler", None)
    if handler is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return handler(args)
    except RoadRiskError as e:
        print(f"{e.code}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"IO_ERROR: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
