// Web-mercator math: lon/lat to world pixels at a zoom, the set of tiles
// covering a viewport, and the inverse for map clicks. Everything here is
// pure so tile URL construction stays a function of the view state.

import type { LonLat } from "./types";

export const TILE_SIZE = 256;
export const MIN_ZOOM = 0;
export const MAX_ZOOM = 19;
const MAX_MERC_LAT = 85.05112878;

export interface PlacedTile {
  z: number;
  x: number;
  y: number;
  left: number; // CSS offset inside the viewport
  top: number;
}

export function clampZoom(z: number): number {
  return Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, Math.round(z)));
}

export function clampLat(lat: number): number {
  return Math.min(MAX_MERC_LAT, Math.max(-MAX_MERC_LAT, lat));
}

export function worldPixel(p: LonLat, zoom: number): { px: number; py: number } {
  const n = TILE_SIZE * Math.pow(2, zoom);
  const lat = clampLat(p.lat);
  const rad = (lat * Math.PI) / 180;
  const px = ((p.lon + 180) / 360) * n;
  const py = ((1 - Math.log(Math.tan(rad) + 1 / Math.cos(rad)) / Math.PI) / 2) * n;
  return { px, py };
}

export function pixelToLonLat(px: number, py: number, zoom: number): LonLat {
  const n = TILE_SIZE * Math.pow(2, zoom);
  const lon = (px / n) * 360 - 180;
  const y = Math.PI * (1 - (2 * py) / n);
  const lat = (Math.atan(Math.sinh(y)) * 180) / Math.PI;
  return { lat, lon };
}

/** Tiles covering a w x h viewport centered on `center`, with placement. */
export function visibleTiles(center: LonLat, zoom: number, w: number, h: number): PlacedTile[] {
  const z = clampZoom(zoom);
  const tiles = Math.pow(2, z);
  const c = worldPixel(center, z);
  const left = c.px - w / 2;
  const top = c.py - h / 2;
  const x0 = Math.floor(left / TILE_SIZE);
  const x1 = Math.floor((left + w - 1) / TILE_SIZE);
  const y0 = Math.max(0, Math.floor(top / TILE_SIZE));
  const y1 = Math.min(tiles - 1, Math.floor((top + h - 1) / TILE_SIZE));
  const out: PlacedTile[] = [];
  for (let ty = y0; ty <= y1; ty++) {
    for (let tx = x0; tx <= x1; tx++) {
      const wrapped = ((tx % tiles) + tiles) % tiles; // antimeridian wrap
      out.push({
        z,
        x: wrapped,
        y: ty,
        left: tx * TILE_SIZE - left,
        top: ty * TILE_SIZE - top,
      });
    }
  }
  return out;
}

/** Viewport-relative pixel for a point, for drawing road geometry. */
export function viewportPixel(
  p: LonLat,
  center: LonLat,
  zoom: number,
  w: number,
  h: number,
): { x: number; y: number } {
  const z = clampZoom(zoom);
  const c = worldPixel(center, z);
  const q = worldPixel(p, z);
  return { x: q.px - (c.px - w / 2), y: q.py - (c.py - h / 2) };
}

/** Inverse of viewportPixel, for map clicks. */
export function viewportToLonLat(
  x: number,
  y: number,
  center: LonLat,
  zoom: number,
  w: number,
  h: number,
): LonLat {
  const z = clampZoom(zoom);
  const c = worldPixel(center, z);
  return pixelToLonLat(c.px - w / 2 + x, c.py - h / 2 + y, z);
}
