"""Road segmentation, bucket-grid candidate retrieval, and event matching.

Matching correctness is defined against a brute-force oracle: the index path
and the brute-force path funnel every span through the same numpy kernel
(geo.span_distances_m), so both produce bit-identical distances and the
index only changes which segments get evaluated, never the arithmetic.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass

import numpy as np

from .cellgrid import CellId, GridSpec, cell_of
from .common import RoadRiskError
from .geo import (
    GeoPoint,
    Polyline,
    bearing_deg,
    haversine_m,
    interpolate,
    polyline_length_m,
    span_distances_m,
)


class SegmentError(RoadRiskError):
    code = "SEGMENTS_INVALID"


@dataclass(frozen=True)
class RoadSegment:
    segment_id: str
    road_id: str
    part_index: int
    geometry: Polyline
    length_m: float
    road_class: str
    midpoint: GeoPoint
    bearing: float
    sinuosity: float
    degenerate: bool = False


@dataclass(frozen=True)
class MatchResult:
    event_id: str
    segment_id: str | None
    distance_m: float | None

    @property
    def matched(self) -> bool:
        return self.segment_id is not None


def _point_at_arclength(points, cum, target):
    """Point at arclength `target` along a polyline with cumulative lengths `cum`."""
    if target <= 0:
        return points[0]
    if target >= cum[-1]:
        return points[-1]
    # first span whose end passes target
    for i in range(1, len(cum)):
        if cum[i] >= target:
            span = cum[i] - cum[i - 1]
            frac = 0.0 if span == 0 else (target - cum[i - 1]) / span
            return interpolate(points[i - 1], points[i], frac)
    return points[-1]


def _slice_between(points, cum, a, b):
    """Vertices of the sub-polyline covering arclength [a, b]."""
    out = [_point_at_arclength(points, cum, a)]
    for i in range(1, len(cum) - 1):
        if a < cum[i] < b:
            out.append(points[i])
    end = _point_at_arclength(points, cum, b)
    if out[-1] != end or len(out) == 1:
        out.append(end)
    return out


def _make_segment(road, part_index, points, degenerate=False):
    poly = Polyline(points)
    length = polyline_length_m(poly)
    first, last = poly.points[0], poly.points[-1]
    chord = haversine_m(first, last)
    if chord > 0 and length > 0:
        sinuosity = max(1.0, length / chord)
    else:
        sinuosity = 1.0
    cum = [0.0]
    for p, q in zip(poly.points, poly.points[1:]):
        cum.append(cum[-1] + haversine_m(p, q))
    midpoint = _point_at_arclength(poly.points, cum, length / 2.0)
    brg, _ = bearing_deg(first, last)
    return RoadSegment(
        segment_id=f"{road.road_id}#{part_index}",
        road_id=road.road_id,
        part_index=part_index,
        geometry=poly,
        length_m=length,
        road_class=road.road_class,
        midpoint=midpoint,
        bearing=brg,
        sinuosity=sinuosity,
        degenerate=degenerate,
    )


def segment_road(road, max_len_m: float = 500.0):
    """Split a road into ceil(length/max_len) equal-arclength parts."""
    if max_len_m <= 0:
        raise SegmentError("max_len_m must be positive")
    points = road.geometry.points
    cum = [0.0]
    for p, q in zip(points, points[1:]):
        cum.append(cum[-1] + haversine_m(p, q))
    total = cum[-1]
    if total == 0.0:
        return [_make_segment(road, 0, [points[0], points[-1]], degenerate=True)]
    n = max(1, math.ceil(total / max_len_m))
    part_len = total / n
    out = []
    for i in range(n):
        pts = _slice_between(points, cum, i * part_len, (i + 1) * part_len)
        out.append(_make_segment(road, i, pts))
    return out


class SegmentIndex:
    """Bucket grid over segment bounding boxes.

    Each segment is registered in every index cell its bbox touches, so a
    lookup with a conservative degree margin returns a superset of every
    segment within the query radius.
    """

    def __init__(self, segments, bucket_res_deg: float = 0.05):
        self.grid = GridSpec(bucket_res_deg)
        self.by_id = {}
        self.buckets: dict[CellId, list] = {}
        for seg in segments:
            if seg.segment_id in self.by_id:
                raise SegmentError(f"duplicate segment id {seg.segment_id}")
            self.by_id[seg.segment_id] = seg
            b = seg.geometry.bbox()
            lo = cell_of(GeoPoint(b.min_lat, b.min_lon), self.grid)
            hi = cell_of(GeoPoint(b.max_lat, b.max_lon), self.grid)
            for row in range(lo.row, hi.row + 1):
                for col in range(lo.col, hi.col + 1):
                    self.buckets.setdefault(CellId(row, col), []).append(seg.segment_id)
        # precompute flattened span arrays per segment for the match kernel
        self._spans = {}
        for sid, seg in self.by_id.items():
            lats, lons = seg.geometry.lats, seg.geometry.lons
            self._spans[sid] = (lats[:-1], lons[:-1], lats[1:], lons[1:])

    def __len__(self):
        return len(self.by_id)

    def candidates(self, q: GeoPoint, radius_m: float):
        """Ids of every segment whose bucket neighborhood the query touches.

        The degree margins bound the distance kernel exactly (kernel distance
        is at least meters-per-degree times either coordinate delta), padded
        slightly so edge-exact coordinates never fall out of the window.
        Columns wrap across the antimeridian; rows clamp at the poles.
        """
        meters_per_deg = math.pi * 6_371_008.8 / 180.0
        dlat = radius_m / meters_per_deg + 1e-9
        cos_lat = math.cos(math.radians(q.lat))
        dlon = 360.0 if cos_lat < 1e-6 else min(360.0, dlat / cos_lat * 1.01)
        res = self.grid.resolution_deg
        n_rows, n_cols = self.grid.n_rows, self.grid.n_cols
        row_lo = max(0, math.floor((q.lat - dlat + 90.0) / res))
        row_hi = min(n_rows - 1, math.floor((q.lat + dlat + 90.0) / res))
        col_lo = math.floor((q.lon - dlon + 180.0) / res)
        col_hi = math.floor((q.lon + dlon + 180.0) / res)
        if col_hi - col_lo + 1 >= n_cols:
            cols = range(n_cols)
        else:
            cols = [c % n_cols for c in range(col_lo, col_hi + 1)]
        out = set()
        for row in range(row_lo, row_hi + 1):
            for col in cols:
                out.update(self.buckets.get(CellId(row, col), ()))
        return out


def _nearest_among(q: GeoPoint, ids, spans):
    """(best_distance, best_segment_id) over the given ids; lowest id wins ties.

    Iterates ids in sorted order so the first strict improvement rule is the
    lexicographic tie-break.
    """
    cos_lat = math.cos(math.radians(q.lat))
    best_d = math.inf
    best_id = None
    for sid in sorted(ids):
        lat0, lon0, lat1, lon1 = spans[sid]
        d = float(np.min(span_distances_m(q.lat, q.lon, cos_lat, lat0, lon0, lat1, lon1)))
        if d < best_d:
            best_d = d
            best_id = sid
    return best_d, best_id


def match_point(q: GeoPoint, idx: SegmentIndex, cutoff_m: float = 1000.0) -> MatchResult:
    return _match_one("", q, idx, cutoff_m)


def _match_one(event_id, q, idx, cutoff_m):
    ids = idx.candidates(q, cutoff_m)
    if not ids:
        return MatchResult(event_id, None, None)
    d, sid = _nearest_among(q, ids, idx._spans)
    if d <= cutoff_m:
        return MatchResult(event_id, sid, d)
    return MatchResult(event_id, None, None)


@dataclass
class MatchStats:
    total: int
    matched: int
    median_m: float | None
    mean_m: float | None
    p95_m: float | None
    by_tag: dict

    def to_json(self):
        return {"total": self.total, "matched": self.matched,
                "median_m": self.median_m, "mean_m": self.mean_m,
                "p95_m": self.p95_m, "by_tag": dict(sorted(self.by_tag.items()))}


def compute_stats(results, tags=None) -> MatchStats:
    """Stats over matched events only; tags maps event_id -> group label."""
    by_tag: dict[str, int] = {}
    if tags:
        for r in results:
            if r.matched and r.event_id in tags:
                t = tags[r.event_id]
                by_tag[t] = by_tag.get(t, 0) + 1
    dists = sorted(r.distance_m for r in results if r.matched)
    if not dists:
        return MatchStats(len(results), 0, None, None, None, by_tag)
    p95 = dists[math.ceil(0.95 * len(dists)) - 1]
    return MatchStats(
        total=len(results),
        matched=len(dists),
        median_m=statistics.median(dists),
        mean_m=sum(dists) / len(dists),
        p95_m=p95,
        by_tag=by_tag,
    )


def match_events(events, idx: SegmentIndex, cutoff_m: float = 1000.0, tags=None):
    """Match every (event_id, GeoPoint) pair. Returns (results, stats)."""
    results = [_match_one(eid, q, idx, cutoff_m) for eid, q in events]
    return results, compute_stats(results, tags)


def brute_force_match(events, segments, cutoff_m: float = 1000.0):
    """O(N*M) reference matcher; same kernel, no index. For oracle checks.

    All spans are concatenated in sorted-segment order, so the first global
    argmin lands on the lowest segment id among equal distances — the same
    tie-break _nearest_among applies, at a speed that survives large oracles.
    """
    ordered = sorted(segments, key=lambda s: s.segment_id)
    if not ordered:
        return [MatchResult(eid, None, None) for eid, _ in events]
    ids = [s.segment_id for s in ordered]
    lat0 = np.concatenate([s.geometry.lats[:-1] for s in ordered])
    lon0 = np.concatenate([s.geometry.lons[:-1] for s in ordered])
    lat1 = np.concatenate([s.geometry.lats[1:] for s in ordered])
    lon1 = np.concatenate([s.geometry.lons[1:] for s in ordered])
    seg_of = np.concatenate([np.full(len(s.geometry.lats) - 1, i)
                             for i, s in enumerate(ordered)])
    results = []
    for eid, q in events:
        cos_lat = math.cos(math.radians(q.lat))
        d_all = span_distances_m(q.lat, q.lon, cos_lat, lat0, lon0, lat1, lon1)
        k = int(np.argmin(d_all))
        d = float(d_all[k])
        if d <= cutoff_m:
            results.append(MatchResult(eid, ids[int(seg_of[k])], d))
        else:
            results.append(MatchResult(eid, None, None))
    return results


# store round trip


def save_segments(segments, path, extra=None):
    """Write segments (and optional extra payload) as versioned JSON."""
    data = {
        "format": "rrm-segments-v1",
        "segments": [{
            "segment_id": s.segment_id,
            "road_id": s.road_id,
            "part_index": s.part_index,
            "class": s.road_class,
            "coords": s.geometry.coords(),
            "degenerate": s.degenerate,
        } for s in segments],
    }
    if extra:
        data.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_segments(path):
    """Returns (segments, full document). Derived fields are recomputed."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("format") != "rrm-segments-v1":
        raise SegmentError(f"{path}: unknown segments format {data.get('format')!r}")
    out = []
    for item in data["segments"]:
        poly = Polyline([GeoPoint(lat, lon) for lon, lat in item["coords"]])
        road = _RoadStub(item["road_id"], item["class"], poly)
        seg = _make_segment(road, item["part_index"], poly.points,
                            degenerate=item.get("degenerate", False))
        out.append(seg)
    return out, data


@dataclass(frozen=True)
class _RoadStub:
    road_id: str
    road_class: str
    geometry: Polyline
