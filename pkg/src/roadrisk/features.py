"""Training-example assembly: cell-hour and segment-hour feature vectors.

The two normative feature schedules live here. The baseline (cell) vector
has 16 slots and the segment vector 26; the exact orders are the contract
that the model store and the serving layer both depend on, so change them
only with a format version bump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

from .cellgrid import CellId, GridSpec, cell_center, cell_of, expand_candidates
from .common import DetRng, RoadRiskError, from_epoch_hour, require_finite, to_epoch_hour
from .geo import haversine_m
from .ingest import build_climatology, representative_stations

TWO_PI = 2.0 * math.pi

BASELINE_FEATURE_NAMES = [
    "lat_norm", "lon_norm",
    "hod_sin", "hod_cos", "dow_sin", "dow_cos", "month_sin", "month_cos",
    "cell_total_log", "cell_samehow_log",
    "temp_c", "dewpoint_c", "rel_humidity", "wind_ms", "wet", "precip_mm",
]

SEGMENT_FEATURE_NAMES = [
    "length_log", "sinuosity", "bearing_sin", "bearing_cos",
    "class_primary", "class_secondary", "class_other",
    "mid_lat_norm", "mid_lon_norm",
    "hod_sin", "hod_cos", "dow_sin", "dow_cos", "month_sin", "month_cos",
    "seg_total_log", "seg_samehow_log", "cell_total_log",
    "severity_mean", "recency",
    "temp_c", "dewpoint_c", "rel_humidity", "wind_ms", "wet", "precip_mm",
]

RECENCY_HALF_LIFE_DAYS = 30.0

# last-resort fill when neither observation nor climatology covers a bucket
NEUTRAL_WEATHER = {"temp_c": 10.0, "dewpoint_c": 5.0, "rel_humidity": 0.7,
                   "wind_ms": 3.0, "precip_mm": 0.0}


class FeatureError(RoadRiskError):
    code = "DATASET_INVALID"


def cyc_encode(value: float, period: float):
    if period <= 0:
        raise ValueError("period must be positive")
    angle = TWO_PI * value / period
    return math.sin(angle), math.cos(angle)


def hour_of_week(at: datetime) -> int:
    """0 = Monday 00:00 UTC through 167 = Sunday 23:00 UTC."""
    return at.weekday() * 24 + at.hour


@dataclass(frozen=True)
class WeatherValues:
    temp_c: float
    dewpoint_c: float
    rel_humidity: float
    wind_ms: float
    precip_mm: float


@dataclass
class HistoryTables:
    """Event counts per cell/segment, restricted to the training period."""
    cell_total: dict
    cell_how: dict
    seg_total: dict
    seg_how: dict
    seg_severity_mean: dict
    seg_last_at: dict

    def to_json(self):
        return {
            "cell_total": {c.token(): n for c, n in sorted(self.cell_total.items())},
            "cell_how": {f"{c.token()}|{h}": n for (c, h), n in sorted(self.cell_how.items())},
            "seg_total": dict(sorted(self.seg_total.items())),
            "seg_how": {f"{s}|{h}": n for (s, h), n in sorted(self.seg_how.items())},
            "seg_severity_mean": dict(sorted(self.seg_severity_mean.items())),
            "seg_last_at": {s: to_epoch_hour(t) for s, t in sorted(self.seg_last_at.items())},
        }

    @classmethod
    def from_json(cls, data):
        from .cellgrid import parse_token
        cell_total = {parse_token(k): v for k, v in data["cell_total"].items()}
        cell_how = {}
        for key, v in data["cell_how"].items():
            tok, h = key.rsplit("|", 1)
            cell_how[(parse_token(tok), int(h))] = v
        seg_how = {}
        for key, v in data["seg_how"].items():
            s, h = key.rsplit("|", 1)
            seg_how[(s, int(h))] = v
        return cls(
            cell_total=cell_total,
            cell_how=cell_how,
            seg_total=dict(data["seg_total"]),
            seg_how=seg_how,
            seg_severity_mean=dict(data["seg_severity_mean"]),
            seg_last_at={s: from_epoch_hour(h) for s, h in data["seg_last_at"].items()},
        )


def build_history(cell_events, seg_events, train_period) -> HistoryTables:
    """Count events inside [train_period[0], train_period[1]).

    cell_events: iterable of (CellId, datetime).
    seg_events: iterable of (segment_id, datetime, severity).
    """
    start, end = train_period
    cell_total: dict = {}
    cell_how: dict = {}
    for cell, at in cell_events:
        if not (start <= at < end):
            continue
        cell_total[cell] = cell_total.get(cell, 0) + 1
        key = (cell, hour_of_week(at))
        cell_how[key] = cell_how.get(key, 0) + 1
    seg_total: dict = {}
    seg_how: dict = {}
    sev_sum: dict = {}
    seg_last: dict = {}
    for sid, at, severity in seg_events:
        if not (start <= at < end):
            continue
        seg_total[sid] = seg_total.get(sid, 0) + 1
        key = (sid, hour_of_week(at))
        seg_how[key] = seg_how.get(key, 0) + 1
        sev_sum[sid] = sev_sum.get(sid, 0.0) + severity
        if sid not in seg_last or at > seg_last[sid]:
            seg_last[sid] = at
    sev_mean = {sid: sev_sum[sid] / seg_total[sid] for sid in sev_sum}
    return HistoryTables(cell_total, cell_how, seg_total, seg_how, sev_mean, seg_last)


def _time_slots(at: datetime):
    hod = cyc_encode(at.hour, 24)
    dow = cyc_encode(at.weekday(), 7)
    month = cyc_encode(at.month - 1, 12)
    return [hod[0], hod[1], dow[0], dow[1], month[0], month[1]]


def _weather_slots(w):
    wet = 1.0 if w.precip_mm > 0.0 else 0.0
    return [
        require_finite("temp_c", w.temp_c),
        require_finite("dewpoint_c", w.dewpoint_c),
        require_finite("rel_humidity", w.rel_humidity),
        require_finite("wind_ms", w.wind_ms),
        wet,
        require_finite("precip_mm", w.precip_mm),
    ]


def baseline_features(cell: CellId, at: datetime, history: HistoryTables,
                      weather, grid: GridSpec):
    """The 16-slot cell-hour vector, in BASELINE_FEATURE_NAMES order."""
    center = cell_center(cell, grid)
    how = hour_of_week(at)
    total = history.cell_total.get(cell, 0)
    samehow = history.cell_how.get((cell, how), 0)
    vec = [center.lat / 90.0, center.lon / 180.0]
    vec += _time_slots(at)
    vec += [math.log1p(total), math.log1p(samehow)]
    vec += _weather_slots(weather)
    return vec


def segment_features(segment, at: datetime, history: HistoryTables,
                     weather, grid: GridSpec):
    """The 26-slot segment-hour vector, in SEGMENT_FEATURE_NAMES order."""
    how = hour_of_week(at)
    b_sin, b_cos = cyc_encode(segment.bearing, 360.0)
    cls = segment.road_class
    one_hot = [1.0 if cls == "primary" else 0.0,
               1.0 if cls == "secondary" else 0.0,
               1.0 if cls == "other" else 0.0]
    cell = cell_of(segment.midpoint, grid)
    total = history.seg_total.get(segment.segment_id, 0)
    samehow = history.seg_how.get((segment.segment_id, how), 0)
    cell_total = history.cell_total.get(cell, 0)
    severity = history.seg_severity_mean.get(segment.segment_id, 0.0)
    last_at = history.seg_last_at.get(segment.segment_id)
    if last_at is None:
        recency = 0.0
    else:
        days = max(0.0, (at - last_at).total_seconds() / 86400.0)
        recency = math.exp(-days / RECENCY_HALF_LIFE_DAYS)
    vec = [math.log1p(segment.length_m), segment.sinuosity, b_sin, b_cos]
    vec += one_hot
    vec += [segment.midpoint.lat / 90.0, segment.midpoint.lon / 180.0]
    vec += _time_slots(at)
    vec += [math.log1p(total), math.log1p(samehow), math.log1p(cell_total),
            severity, recency]
    vec += _weather_slots(weather)
    return vec


class ExplicitKeySpace:
    """A concrete, sorted list of candidate keys."""

    def __init__(self, keys):
        self.keys = sorted(set(keys))

    def __len__(self):
        return len(self.keys)

    def __getitem__(self, i):
        return self.keys[i]


class ProductKeySpace:
    """units x [hour_lo, hour_hi] without materializing the product."""

    def __init__(self, units, hour_lo: int, hour_hi: int):
        if hour_hi < hour_lo:
            raise ValueError("empty hour range")
        self.units = sorted(set(units))
        self.hour_lo = hour_lo
        self.n_hours = hour_hi - hour_lo + 1

    def __len__(self):
        return len(self.units) * self.n_hours

    def __getitem__(self, i):
        unit_idx, hour_idx = divmod(i, self.n_hours)
        return (self.units[unit_idx], self.hour_lo + hour_idx)


def build_examples(positive_keys, space, k: int, seed: int):
    """Label positives 1 and k*|positives| sampled negatives 0, shuffled.

    Negatives are uniform without replacement over the key space minus the
    positive set. Deterministic for a given seed.
    """
    if k < 1:
        raise FeatureError("negative ratio k must be >= 1")
    pos = set(positive_keys)
    size = len(space)
    if size <= len(pos):
        raise FeatureError(f"candidate space ({size}) must exceed positives ({len(pos)})")
    n_neg = k * len(pos)
    available = size - len(pos)
    if n_neg > available:
        need = n_neg + len(pos)
        raise FeatureError(
            f"candidate space too small: {size} keys, need at least {need} for k={k}")
    rng = DetRng(seed)
    if n_neg > available // 2:
        # dense regime: materialize the complement and partial-shuffle
        pool = [space[i] for i in range(size) if space[i] not in pos]
        for i in range(n_neg):
            j = i + rng.randint(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        negatives = pool[:n_neg]
    else:
        # sparse regime: rejection-sample indices
        drawn = set()
        negatives = []
        while len(negatives) < n_neg:
            i = rng.randint(size)
            if i in drawn:
                continue
            key = space[i]
            if key in pos:
                continue
            drawn.add(i)
            negatives.append(key)
    examples = [(key, 1) for key in sorted(pos)] + [(key, 0) for key in negatives]
    rng.shuffle(examples)
    return examples


def split_by_year(items, eval_year: int, at_of=lambda e: e.at):
    """(train, eval): train strictly before eval_year, eval inside it."""
    train = []
    ev = []
    for item in items:
        year = at_of(item).year
        if year < eval_year:
            train.append(item)
        elif year == eval_year:
            ev.append(item)
        else:
            raise FeatureError(f"example dated {year}, after eval year {eval_year}")
    if not train or not ev:
        raise FeatureError(f"empty split for eval year {eval_year}: "
                           f"{len(train)} train, {len(ev)} eval")
    return train, ev


class HistoricalWeather:
    """Complete weather values for (station, hour) with climatology fallback.

    mode "observed": use the station's recorded hour, filling missing fields
    from the (station, month, hour-of-day) climatology bucket.
    mode "climatology": ignore observations entirely.
    Both fall back to neutral constants when climatology has no bucket.
    """

    def __init__(self, observed_rows, climatology, mode="observed"):
        if mode not in ("observed", "climatology"):
            raise FeatureError(f"unknown weather mode {mode!r}")
        self.mode = mode
        self.clim = climatology
        self.obs = {}
        if mode == "observed":
            for row in observed_rows:
                self.obs[(row.station_id, to_epoch_hour(row.at))] = row

    def values_for(self, station_id: str, at: datetime) -> WeatherValues:
        bucket = self.clim.lookup(station_id, at.month, at.hour)
        row = None
        if self.mode == "observed":
            row = self.obs.get((station_id, to_epoch_hour(at)))
        out = {}
        for var in NEUTRAL_WEATHER:
            value = getattr(row, var, None) if row is not None else None
            if value is None and bucket is not None:
                value = bucket.means.get(var)
            if value is None:
                value = NEUTRAL_WEATHER[var]
            out[var] = value
        return WeatherValues(**out)


@dataclass(frozen=True)
class BaselineExample:
    cell: CellId
    at: datetime
    features: list
    label: int


@dataclass(frozen=True)
class SegmentExample:
    segment_id: str
    at: datetime
    features: list
    label: int


@dataclass
class BaselineDataset:
    train: list
    eval: list
    names: list
    history: HistoryTables
    candidates: list
    station_map: dict
    stations: list
    climatology: object
    hours: tuple


def assemble_baseline(incidents, stations, weather_rows, grid: GridSpec,
                      ring: int = 1, k: int = 5, seed: int = 42,
                      eval_year: int | None = None, max_stations: int = 149,
                      weather_mode: str = "observed") -> BaselineDataset:
    """The full cell-hour dataset pipeline, from cleaned records to split examples."""
    if not incidents:
        raise FeatureError("no incidents")
    if eval_year is None:
        eval_year = max(r.at.year for r in incidents)
    train_start = datetime(1900, 1, 1, tzinfo=timezone.utc)
    eval_start = datetime(eval_year, 1, 1, tzinfo=timezone.utc)

    cell_events = [(cell_of(r.loc, grid), r.at) for r in incidents]
    event_cells = {c for c, _ in cell_events}
    candidates = expand_candidates(event_cells, grid, ring)
    selected, station_map = representative_stations(stations, candidates, grid, max_stations)
    selected_ids = {s.id for s in selected}
    climatology = build_climatology(weather_rows, selected)
    weather = HistoricalWeather(
        [w for w in weather_rows if w.station_id in selected_ids],
        climatology, mode=weather_mode)
    history = build_history(cell_events, [], (train_start, eval_start))

    positives = {(cell, to_epoch_hour(at)) for cell, at in cell_events}
    hour_lo = min(h for _, h in positives)
    hour_hi = max(h for _, h in positives)

    # One negative draw per split. Training negatives come from a key space
    # derived only from pre-eval events (cells seen before the eval year,
    # hours up to the last pre-eval positive), so nothing about the training
    # rows moves when an eval-year event moves. The eval draw runs on its
    # own seed so the two streams stay disjoint.
    eval_start_hour = to_epoch_hour(eval_start)
    train_pos = {key for key in positives if key[1] < eval_start_hour}
    eval_pos = positives - train_pos
    labeled = []
    if train_pos:
        train_cells = {c for c, at in cell_events if at < eval_start}
        train_space = ProductKeySpace(expand_candidates(train_cells, grid, ring),
                                      min(h for _, h in train_pos),
                                      max(h for _, h in train_pos))
        labeled += build_examples(train_pos, train_space, k, seed)
    if eval_pos:
        eval_space = ProductKeySpace(candidates,
                                     min(h for _, h in eval_pos),
                                     max(h for _, h in eval_pos))
        labeled += build_examples(eval_pos, eval_space, k, seed + 1)

    examples = []
    for (cell, hour), label in labeled:
        at = from_epoch_hour(hour)
        w = weather.values_for(station_map[cell], at)
        examples.append(BaselineExample(cell, at, baseline_features(cell, at, history, w, grid), label))
    train, ev = split_by_year(examples, eval_year)
    return BaselineDataset(train, ev, list(BASELINE_FEATURE_NAMES), history,
                           candidates, station_map, selected, climatology,
                           (hour_lo, hour_hi))


@dataclass
class SegmentDataset:
    train: list
    eval: list
    names: list
    history: HistoryTables
    hours: tuple


def assemble_segment(matched, segments, grid: GridSpec, station_map, stations,
                     climatology, weather_rows, k: int = 5, seed: int = 42,
                     eval_year: int | None = None,
                     weather_mode: str = "observed",
                     cell_events=None) -> SegmentDataset:
    """Segment-hour dataset from matched events.

    matched: iterable of (segment_id, datetime, severity).
    cell_events: optional (CellId, datetime) pairs so the containing-cell
    count slot uses the same history as the baseline model.
    """
    matched = list(matched)
    if not matched:
        raise FeatureError("no matched events")
    if eval_year is None:
        eval_year = max(at.year for _, at, _ in matched)
    train_start = datetime(1900, 1, 1, tzinfo=timezone.utc)
    eval_start = datetime(eval_year, 1, 1, tzinfo=timezone.utc)
    history = build_history(cell_events or [], matched, (train_start, eval_start))

    by_id = {s.segment_id: s for s in segments}
    missing = {sid for sid, _, _ in matched if sid not in by_id}
    if missing:
        raise FeatureError(f"{len(missing)} matched segment ids not in the store")

    weather = HistoricalWeather(weather_rows, climatology, mode=weather_mode)
    station_cache = {}

    def station_for(segment):
        cell = cell_of(segment.midpoint, grid)
        sid = station_cache.get(cell)
        if sid is None:
            sid = station_map.get(cell)
        if sid is None:
            center = cell_center(cell, grid)
            sid = min(stations, key=lambda s: haversine_m(s.loc, center)).id
        station_cache[cell] = sid
        return sid

    positives = {(sid, to_epoch_hour(at)) for sid, at, _ in matched}
    hour_lo = min(h for _, h in positives)
    hour_hi = max(h for _, h in positives)

    # Per-split negative draws, mirroring the cell dataset: the segment store
    # itself never depends on events, so only the hour windows and the draw
    # seeds need to be split-local for training rows to ignore eval events.
    eval_start_hour = to_epoch_hour(eval_start)
    train_pos = {key for key in positives if key[1] < eval_start_hour}
    eval_pos = positives - train_pos
    units = sorted(by_id)
    labeled = []
    if train_pos:
        labeled += build_examples(train_pos,
                                  ProductKeySpace(units,
                                                  min(h for _, h in train_pos),
                                                  max(h for _, h in train_pos)),
                                  k, seed)
    if eval_pos:
        labeled += build_examples(eval_pos,
                                  ProductKeySpace(units,
                                                  min(h for _, h in eval_pos),
                                                  max(h for _, h in eval_pos)),
                                  k, seed + 1)

    examples = []
    for (sid, hour), label in labeled:
        seg = by_id[sid]
        at = from_epoch_hour(hour)
        w = weather.values_for(station_for(seg), at)
        examples.append(SegmentExample(sid, at, segment_features(seg, at, history, w, grid), label))
    train, ev = split_by_year(examples, eval_year)
    return SegmentDataset(train, ev, list(SEGMENT_FEATURE_NAMES), history,
                          (hour_lo, hour_hi))


EXAMPLES_MAGIC = "# rrm-examples-v1"


def write_examples(path, names, examples, key_of):
    """Versioned columnar file: magic line, header, one row per example."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(EXAMPLES_MAGIC + "\n")
        fh.write(",".join(["key", "epoch_hour", "label"] + list(names)) + "\n")
        for ex in examples:
            row = [key_of(ex), str(to_epoch_hour(ex.at)), str(ex.label)]
            row += [repr(v) for v in ex.features]
            fh.write(",".join(row) + "\n")


def read_examples(path):
    """Returns (names, rows) with rows of (key, epoch_hour, label, features)."""
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != EXAMPLES_MAGIC:
            raise FeatureError(f"{path}: bad examples magic {magic!r}")
        header = fh.readline().strip().split(",")
        if header[:3] != ["key", "epoch_hour", "label"]:
            raise FeatureError(f"{path}: bad examples header")
        names = header[3:]
        rows = []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            rows.append((parts[0], int(parts[1]), int(parts[2]),
                         [float(v) for v in parts[3:]]))
    return names, rows


CONTEXT_VERSION = "rrm-context-v1"


class ContextMissingError(RoadRiskError):
    def __init__(self, message: str):
        super().__init__(message, "CONTEXT_MISSING")


@dataclass
class Context:
    """Everything the serving layer needs besides the model bundles.

    Written when the baseline dataset is assembled and enriched with the
    segment-side history once events are matched, so overlay builds, the
    forecast, and live scoring all share one view of training-period state.
    """

    grid: GridSpec
    eval_year: int
    weather_mode: str
    candidates: list
    station_map: dict
    stations: list
    climatology: object
    history: HistoryTables
    hours: tuple
    counts: dict

    def to_json(self) -> dict:
        return {
            "format_version": CONTEXT_VERSION,
            "grid_resolution_deg": self.grid.resolution_deg,
            "eval_year": self.eval_year,
            "weather_mode": self.weather_mode,
            "candidates": [c.token() for c in self.candidates],
            "station_map": {c.token(): sid for c, sid in sorted(self.station_map.items())},
            "stations": [{"id": s.id, "lat": s.loc.lat, "lon": s.loc.lon,
                          "name": s.name} for s in self.stations],
            "climatology": self.climatology.to_json(),
            "history": self.history.to_json(),
            "hours": [self.hours[0], self.hours[1]],
            "counts": self.counts,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Context":
        from .cellgrid import parse_token
        from .ingest import Climatology, Station
        from .geo import GeoPoint

        if doc.get("format_version") != CONTEXT_VERSION:
            raise ContextMissingError(
                f"unsupported context version {doc.get('format_version')!r}")
        return cls(
            grid=GridSpec(doc["grid_resolution_deg"]),
            eval_year=int(doc["eval_year"]),
            weather_mode=doc["weather_mode"],
            candidates=[parse_token(t) for t in doc["candidates"]],
            station_map={parse_token(t): sid
                         for t, sid in doc["station_map"].items()},
            stations=[Station(s["id"], GeoPoint(s["lat"], s["lon"]), s["name"])
                      for s in doc["stations"]],
            climatology=Climatology.from_json(doc["climatology"]),
            history=HistoryTables.from_json(doc["history"]),
            hours=(int(doc["hours"][0]), int(doc["hours"][1])),
            counts=dict(doc["counts"]),
        )


def save_context(context: Context, path) -> None:
    from .common import dump_json

    dump_json(context.to_json(), path, indent=1)


def load_context(path) -> Context:
    import json
    import os

    if not os.path.exists(path):
        raise ContextMissingError(f"context file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ContextMissingError(f"{path}: unreadable context: {e}") from e
    return Context.from_json(doc)
