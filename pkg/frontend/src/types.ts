// Wire types for the documented service endpoints. Field names mirror the
// JSON exactly; anything optional on the wire is optional here.

export interface LonLat {
  lat: number;
  lon: number;
}

export type WeatherSource = "live-primary" | "live-secondary" | "climatology" | string;

export interface WeatherHour {
  valid_at: string;
  temp_c: number;
  dewpoint_c: number;
  rel_humidity: number;
  wind_ms: number;
  precip_mm: number;
  source: WeatherSource;
}

export interface NearestSegment {
  id: string;
  distance_m: number;
  segment_score: number | null;
}

export interface RiskResponse {
  cell_id: string;
  at: string;
  baseline_score: number;
  nearest_segment: NearestSegment | null;
  weather: WeatherHour;
  sources: WeatherSource[];
}

export interface TimelineEntry {
  valid_at: string;
  score: number;
  source: WeatherSource;
}

export interface TimelineResponse {
  cell_id: string | null;
  entries: TimelineEntry[];
  note?: string;
}

export interface SegmentHistory {
  total: number;
  same_how: number[];
  severity_mean: number | null;
  last_at: string | null;
}

export interface SegmentDetail {
  id: string;
  class: string;
  length_m: number;
  geometry: [number, number][]; // [lon, lat] pairs
  history: SegmentHistory;
  series: TimelineEntry[];
  note?: string;
}

export interface RoadTileSegment {
  id: string;
  class: string;
  score: number;
  coords: [number, number][];
}

export interface RoadTileDoc {
  tile: { z: number; x: number; y: number };
  hour_offset: number;
  generated_at: string | null;
  segments: RoadTileSegment[];
  note?: string;
}

export interface MetaResponse {
  snapshot_id: number;
  models: Record<string, unknown>;
  overlay: Record<string, unknown> | null;
  forecast: {
    generated_at: string;
    age_s: number;
    horizon: number;
    segments: number;
  } | null;
  last_refresh_error: string | null;
  provider_health: unknown;
  grid: { resolution_deg: number };
}

export interface ErrorBody {
  error: { code: string; message: string; fields?: string[] };
}
