// Shared wire-shaped fixtures for panel and app tests.

import type {
  MetaResponse,
  RiskResponse,
  RoadTileDoc,
  SegmentDetail,
  TimelineResponse,
} from "../src/types";

const hourAt = (i: number) => `2020-12-31T${String(10 + (i % 14)).padStart(2, "0")}:00:00Z`;

export const riskDoc: RiskResponse = {
  cell_id: "r648c523",
  at: "2020-12-31T10:00:00Z",
  baseline_score: 0.412,
  nearest_segment: { id: "RA#0", distance_m: 42.3, segment_score: 0.317 },
  weather: {
    valid_at: "2020-12-31T10:00:00Z",
    temp_c: 4.2,
    dewpoint_c: 1.1,
    rel_humidity: 0.8,
    wind_ms: 3.4,
    precip_mm: 0,
    source: "climatology",
  },
  sources: Array(24).fill("climatology"),
};

export const timelineDoc: TimelineResponse = {
  cell_id: "r648c523",
  entries: Array.from({ length: 24 }, (_, i) => ({
    valid_at: hourAt(i),
    score: 0.2 + 0.02 * (i % 10),
    source: "climatology",
  })),
};

export const noCoverageDoc: TimelineResponse = {
  cell_id: null,
  entries: [],
  note: "no_coverage",
};

export const segmentDoc: SegmentDetail = {
  id: "RA#0",
  class: "primary",
  length_m: 481.7,
  geometry: [
    [-75.5, 39.5],
    [-75.4977, 39.5],
    [-75.4955, 39.5],
  ],
  history: {
    total: 12,
    same_how: Array.from({ length: 168 }, (_, i) => (i % 24 === 8 ? 3 : i % 5 === 0 ? 1 : 0)),
    severity_mean: 2.08,
    last_at: "2020-05-10T17:00:00Z",
  },
  series: Array.from({ length: 24 }, (_, i) => ({
    valid_at: hourAt(i),
    score: 0.1 + 0.01 * i,
    source: "climatology",
  })),
};

export const metaDoc: MetaResponse = {
  snapshot_id: 1,
  models: {},
  overlay: { cells: 62 },
  forecast: {
    generated_at: "2020-12-31T10:00:00Z",
    age_s: 60,
    horizon: 24,
    segments: 2,
  },
  last_refresh_error: null,
  provider_health: {},
  grid: { resolution_deg: 0.2 },
};

export function roadTileDoc(z: number, x: number, y: number): RoadTileDoc {
  return {
    tile: { z, x, y },
    hour_offset: 0,
    generated_at: "2020-12-31T10:00:00Z",
    segments: [
      {
        id: "RA#0",
        class: "primary",
        score: 0.317,
        coords: [
          [-75.5, 39.5],
          [-75.4955, 39.5],
        ],
      },
    ],
  };
}
