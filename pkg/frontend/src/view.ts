// View state and its transitions. The time index is hour-of-week 0..167 in
// overlay mode and forecast hour-offset 0..23 in road mode; every transition
// keeps it inside the active range.

import { clampZoom, clampLat, visibleTiles } from "./mercator";
import type { LonLat } from "./types";

export type Mode = "weekly-overlay" | "road-forecast";

export type Selected =
  | { kind: "none" }
  | { kind: "point"; at: LonLat }
  | { kind: "segment"; id: string };

export interface ViewState {
  center: LonLat;
  zoom: number;
  mode: Mode;
  timeIndex: number;
  selected: Selected;
}

export const DEFAULT_MIN_ROAD_ZOOM = 10;

export function indexMax(mode: Mode): number {
  return mode === "weekly-overlay" ? 167 : 23;
}

export function clampIndex(mode: Mode, i: number): number {
  return Math.min(indexMax(mode), Math.max(0, Math.trunc(i)));
}

export function initialView(center: LonLat, zoom: number): ViewState {
  return {
    center: { lat: clampLat(center.lat), lon: center.lon },
    zoom: clampZoom(zoom),
    mode: "weekly-overlay",
    timeIndex: 0,
    selected: { kind: "none" },
  };
}

export function setMode(view: ViewState, mode: Mode): ViewState {
  if (mode === view.mode) return view;
  return { ...view, mode, timeIndex: 0 }; // mode switch resets the index
}

export function setIndex(view: ViewState, i: number): ViewState {
  return { ...view, timeIndex: clampIndex(view.mode, i) };
}

/** One autoplay step; wraps past the end of the range. */
export function stepIndex(view: ViewState): ViewState {
  return { ...view, timeIndex: (view.timeIndex + 1) % (indexMax(view.mode) + 1) };
}

export function setZoom(view: ViewState, zoom: number): ViewState {
  return { ...view, zoom: clampZoom(zoom) };
}

export function panBy(view: ViewState, dLat: number, dLon: number): ViewState {
  return {
    ...view,
    center: { lat: clampLat(view.center.lat + dLat), lon: view.center.lon + dLon },
  };
}

export function select(view: ViewState, selected: Selected): ViewState {
  return { ...view, selected };
}

/**
 * The tile URLs a view requests: a pure function of (center, zoom, mode,
 * time index, viewport size). Road mode below the service's minimum road
 * zoom requests nothing (the UI shows a zoom-in prompt instead).
 */
export function tileUrls(
  view: ViewState,
  w: number,
  h: number,
  minRoadZoom: number = DEFAULT_MIN_ROAD_ZOOM,
): string[] {
  if (view.mode === "road-forecast" && view.zoom < minRoadZoom) return [];
  const placed = visibleTiles(view.center, view.zoom, w, h);
  if (view.mode === "weekly-overlay") {
    return placed.map((t) => `/tiles/overlay/${view.timeIndex}/${t.z}/${t.x}/${t.y}.png`);
  }
  return placed.map((t) => `/tiles/roads/${view.timeIndex}/${t.z}/${t.x}/${t.y}.json`);
}
