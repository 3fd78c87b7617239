// Typed client for the service's machine endpoints. Only documented paths
// are constructed here; the rest of the app goes through this module for
// every network call.

import type {
  MetaResponse,
  RiskResponse,
  RoadTileDoc,
  SegmentDetail,
  TimelineResponse,
} from "./types";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  code: string;
  status: number;
  fields: string[];

  constructor(code: string, message: string, status: number, fields: string[] = []) {
    super(message);
    this.code = code;
    this.status = status;
    this.fields = fields;
  }
}

export function isNetworkError(err: unknown): boolean {
  return err instanceof ApiError && err.code === "NETWORK";
}

export class ApiClient {
  private base: string;
  private fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  url(path: string): string {
    return this.base + path;
  }

  private async getJson<T>(path: string, signal?: AbortSignal): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(this.url(path), { signal });
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") throw err;
      throw new ApiError("NETWORK", `request failed: ${String(err)}`, 0);
    }
    if (!res.ok) {
      let code = "HTTP_" + res.status;
      let message = res.statusText || "request failed";
      let fields: string[] = [];
      try {
        const body = (await res.json()) as { error?: { code?: string; message?: string; fields?: string[] } };
        if (body.error) {
          code = body.error.code ?? code;
          message = body.error.message ?? message;
          fields = body.error.fields ?? [];
        }
      } catch {
        // non-JSON error body; keep the status-derived code
      }
      throw new ApiError(code, message, res.status, fields);
    }
    return (await res.json()) as T;
  }

  risk(lat: number, lon: number, signal?: AbortSignal): Promise<RiskResponse> {
    return this.getJson(`/api/risk?lat=${lat}&lon=${lon}`, signal);
  }

  timeline(lat: number, lon: number, signal?: AbortSignal): Promise<TimelineResponse> {
    return this.getJson(`/api/timeline?lat=${lat}&lon=${lon}`, signal);
  }

  segment(id: string, signal?: AbortSignal): Promise<SegmentDetail> {
    // segment ids contain "#" (road id + part index), so encode
    return this.getJson(`/api/segments/${encodeURIComponent(id)}`, signal);
  }

  meta(signal?: AbortSignal): Promise<MetaResponse> {
    return this.getJson("/api/meta", signal);
  }

  roadTile(url: string, signal?: AbortSignal): Promise<RoadTileDoc> {
    return this.getJson<RoadTileDoc>(url, signal);
  }

  /** Raster tiles fetch as blobs so failures are observable per tile. */
  async overlayTile(url: string, signal?: AbortSignal): Promise<Blob> {
    let res: Response;
    try {
      res = await this.fetchFn(this.url(url), { signal });
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") throw err;
      throw new ApiError("NETWORK", `tile failed: ${String(err)}`, 0);
    }
    if (!res.ok) throw new ApiError("HTTP_" + res.status, "tile failed", res.status);
    return res.blob();
  }
}
