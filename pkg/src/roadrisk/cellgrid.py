"""Equal-angle lat/lon cell grid used as the baseline spatial index.

Cells are addressed (row, col) from the south-west corner of the globe.
The floor in cell_of is snapped: coordinates that land within 1e-9 of a
cell edge (in cell units) belong to the higher cell, so 40.0 at 0.2
degrees is row 650 even though (40+90)/0.2 rounds just below 650 in
binary floating point.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .geo import BBox, GeoPoint

EDGE_EPS = 1e-9


@dataclass(frozen=True)
class GridSpec:
    resolution_deg: float = 0.2

    def __post_init__(self):
        if not (self.resolution_deg > 0):
            raise ValueError("resolution must be positive")
        for span in (180.0, 360.0):
            n = round(span / self.resolution_deg)
            if n < 1 or abs(n * self.resolution_deg - span) > 1e-6:
                raise ValueError(f"resolution {self.resolution_deg} does not divide {span}")

    @property
    def n_rows(self) -> int:
        return round(180.0 / self.resolution_deg)

    @property
    def n_cols(self) -> int:
        return round(360.0 / self.resolution_deg)


@dataclass(frozen=True, order=True)
class CellId:
    row: int
    col: int

    def token(self) -> str:
        return f"r{self.row}c{self.col}"


_TOKEN_RE = re.compile(r"^r(\d+)c(\d+)$")


def parse_token(text: str) -> CellId:
    m = _TOKEN_RE.match(text)
    if not m:
        raise ValueError(f"bad cell token: {text!r}")
    return CellId(int(m.group(1)), int(m.group(2)))


def _snapped_floor(q: float) -> int:
    f = math.floor(q)
    if q - f > 1.0 - EDGE_EPS:
        f += 1
    return f


def cell_of(q: GeoPoint, g: GridSpec) -> CellId:
    row = _snapped_floor((q.lat + 90.0) / g.resolution_deg)
    col = _snapped_floor((q.lon + 180.0) / g.resolution_deg)
    # lat exactly 90 lands one past the top row
    row = min(max(row, 0), g.n_rows - 1)
    col = min(max(col, 0), g.n_cols - 1)
    return CellId(row, col)


def cell_bbox(c: CellId, g: GridSpec) -> BBox:
    res = g.resolution_deg
    return BBox(c.row * res - 90.0, c.col * res - 180.0,
                (c.row + 1) * res - 90.0, (c.col + 1) * res - 180.0)


def cell_center(c: CellId, g: GridSpec) -> GeoPoint:
    res = g.resolution_deg
    return GeoPoint((c.row + 0.5) * res - 90.0, (c.col + 0.5) * res - 180.0)


def neighbors(c: CellId, g: GridSpec, ring: int = 1) -> set:
    """Cells within Chebyshev distance <= ring, excluding c itself.

    Columns wrap around the antimeridian; rows are clipped at the poles.
    """
    if ring < 1:
        raise ValueError("ring must be >= 1")
    n_rows, n_cols = g.n_rows, g.n_cols
    out = set()
    for dr in range(-ring, ring + 1):
        row = c.row + dr
        if row < 0 or row >= n_rows:
            continue
        for dc in range(-ring, ring + 1):
            if dr == 0 and dc == 0:
                continue
            cell = CellId(row, (c.col + dc) % n_cols)
            if cell != c:
                out.add(cell)
    return out


def expand_candidates(event_cells, g: GridSpec, ring: int = 1):
    """Event cells plus their ring-neighbors, sorted by (row, col).

    Returns a list so iteration order is stable run to run.
    """
    if ring < 0:
        raise ValueError("ring must be >= 0")
    out = set(event_cells)
    if ring >= 1:
        for c in event_cells:
            out |= neighbors(c, g, ring)
    return sorted(out)
