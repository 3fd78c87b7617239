// The map application controller: owns the view state, the tile layers, the
// inspector panel, and the degraded banner. All network traffic goes through
// one ApiClient so a test can intercept or fail every call.

import { ApiClient, ApiError, isNetworkError, type FetchLike } from "./api";
import { rampCss } from "./ramp";
import { TILE_SIZE, viewportPixel, viewportToLonLat, visibleTiles } from "./mercator";
import {
  DEFAULT_MIN_ROAD_ZOOM,
  initialView,
  panBy,
  setIndex,
  setMode,
  setZoom,
  stepIndex,
  tileUrls,
  indexMax,
  type Mode,
  type ViewState,
} from "./view";
import { errorPanelHtml, notFoundHtml, pointPanelHtml, segmentPanelHtml } from "./panels";
import type { LonLat, RoadTileDoc, RoadTileSegment } from "./types";

export interface AppOptions {
  baseUrl?: string;
  fetchFn?: FetchLike;
  center?: LonLat;
  zoom?: number;
  viewport?: { w: number; h: number };
  minRoadZoom?: number;
  debounceMs?: number;
  autoplayMs?: number;
}

const SVG_NS = "http://www.w3.org/2000/svg";

export class App {
  readonly client: ApiClient;
  view: ViewState;
  refreshCount = 0; // tile-set refreshes actually issued (tests watch this)

  private root: HTMLElement;
  private w: number;
  private h: number;
  private minRoadZoom: number;
  private debounceMs: number;
  private autoplayMs: number;

  private banner!: HTMLElement;
  private mapEl!: HTMLElement;
  private tileLayer!: HTMLElement;
  private roadLayer!: SVGSVGElement;
  private highlightLayer!: SVGSVGElement;
  private hintEl!: HTMLElement;
  private panelEl!: HTMLElement;
  private scrubber!: HTMLInputElement;
  private timeLabel!: HTMLElement;
  private playBtn!: HTMLButtonElement;

  private pending = 0;
  private refreshSeq = 0;
  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private playTimer: ReturnType<typeof setInterval> | null = null;
  private panelAbort: AbortController | null = null;

  constructor(root: HTMLElement, opts: AppOptions = {}) {
    this.root = root;
    this.client = new ApiClient(opts.baseUrl ?? "", opts.fetchFn);
    this.w = opts.viewport?.w ?? 640;
    this.h = opts.viewport?.h ?? 480;
    this.minRoadZoom = opts.minRoadZoom ?? DEFAULT_MIN_ROAD_ZOOM;
    this.debounceMs = opts.debounceMs ?? 150;
    this.autoplayMs = opts.autoplayMs ?? 600;
    this.view = initialView(opts.center ?? { lat: 39.6, lon: -75.7 }, opts.zoom ?? 9);
  }

  async init(): Promise<void> {
    this.buildDom();
    try {
      await this.client.meta();
      this.clearBanner();
    } catch (err) {
      if (isNetworkError(err)) this.showBanner();
    }
    await this.refreshTilesNow();
  }

  /** Resolves once no tile or panel request is in flight. */
  async settle(): Promise<void> {
    while (this.pending > 0 || this.debounceTimer !== null) {
      await new Promise((r) => setTimeout(r, 10));
    }
  }

  destroy(): void {
    if (this.playTimer) clearInterval(this.playTimer);
    if (this.debounceTimer) clearTimeout(this.debounceTimer);
    this.panelAbort?.abort();
  }

  // ------------------------------------------------------------- DOM setup

  private buildDom(): void {
    this.root.innerHTML = `
      <div id="degraded-banner" hidden>
        <span>service unreachable; showing last known state</span>
        <button id="banner-retry">retry</button>
      </div>
      <div id="toolbar">
        <button id="mode-weekly" class="active">weekly overlay</button>
        <button id="mode-road">24h road forecast</button>
        <input id="scrubber" type="range" min="0" max="167" value="0" step="1">
        <span id="time-label"></span>
        <button id="play">play</button>
        <span class="spacer"></span>
        <button id="zoom-in" aria-label="zoom in">+</button>
        <button id="zoom-out" aria-label="zoom out">-</button>
        <button id="pan-n" aria-label="pan north">&uarr;</button>
        <button id="pan-s" aria-label="pan south">&darr;</button>
        <button id="pan-w" aria-label="pan west">&larr;</button>
        <button id="pan-e" aria-label="pan east">&rarr;</button>
      </div>
      <div id="layout">
        <div id="map" style="width:${this.w}px;height:${this.h}px">
          <div id="tile-layer"></div>
          <svg id="road-layer" width="${this.w}" height="${this.h}"></svg>
          <svg id="highlight-layer" width="${this.w}" height="${this.h}"></svg>
          <div id="zoom-hint" hidden>zoom in to see the road forecast</div>
        </div>
        <aside id="panel"><p class="muted">click the map to score a point</p></aside>
      </div>`;
    this.banner = this.q("#degraded-banner");
    this.mapEl = this.q("#map");
    this.tileLayer = this.q("#tile-layer");
    this.roadLayer = this.q("#road-layer");
    this.highlightLayer = this.q("#highlight-layer");
    this.hintEl = this.q("#zoom-hint");
    this.panelEl = this.q("#panel");
    this.scrubber = this.q("#scrubber");
    this.timeLabel = this.q("#time-label");
    this.playBtn = this.q("#play");

    this.q("#banner-retry").addEventListener("click", () => {
      void this.init();
    });
    this.q("#mode-weekly").addEventListener("click", () => this.switchMode("weekly-overlay"));
    this.q("#mode-road").addEventListener("click", () => this.switchMode("road-forecast"));
    this.scrubber.addEventListener("input", () => {
      this.view = setIndex(this.view, Number(this.scrubber.value));
      this.updateTimeLabel();
      this.scheduleRefresh();
    });
    this.playBtn.addEventListener("click", () => this.togglePlay());
    this.q("#zoom-in").addEventListener("click", () => this.changeZoom(1));
    this.q("#zoom-out").addEventListener("click", () => this.changeZoom(-1));
    this.q("#pan-n").addEventListener("click", () => this.pan(0.25, 0));
    this.q("#pan-s").addEventListener("click", () => this.pan(-0.25, 0));
    this.q("#pan-w").addEventListener("click", () => this.pan(0, -0.25));
    this.q("#pan-e").addEventListener("click", () => this.pan(0, 0.25));
    this.mapEl.addEventListener("click", (ev) => this.onMapClick(ev as MouseEvent));
    this.updateTimeLabel();
  }

  private q<T extends Element = HTMLElement>(sel: string): T {
    const el = this.root.querySelector(sel);
    if (!el) throw new Error(`missing element ${sel}`);
    return el as T;
  }

  // ----------------------------------------------------------- interactions

  private switchMode(mode: Mode): void {
    if (mode === this.view.mode) return;
    this.view = setMode(this.view, mode);
    this.scrubber.max = String(indexMax(mode));
    this.scrubber.value = String(this.view.timeIndex);
    this.q("#mode-weekly").classList.toggle("active", mode === "weekly-overlay");
    this.q("#mode-road").classList.toggle("active", mode === "road-forecast");
    this.updateTimeLabel();
    void this.refreshTilesNow();
  }

  private changeZoom(delta: number): void {
    this.view = setZoom(this.view, this.view.zoom + delta);
    void this.refreshTilesNow();
  }

  private pan(dLat: number, dLon: number): void {
    // pan step scales with zoom so a click moves about a quarter viewport
    const scale = Math.pow(2, 9 - this.view.zoom);
    this.view = panBy(this.view, dLat * scale, dLon * scale);
    void this.refreshTilesNow();
  }

  private togglePlay(): void {
    if (this.playTimer) {
      clearInterval(this.playTimer);
      this.playTimer = null;
      this.playBtn.textContent = "play";
      return;
    }
    this.playBtn.textContent = "pause";
    this.playTimer = setInterval(() => {
      this.view = stepIndex(this.view);
      this.scrubber.value = String(this.view.timeIndex);
      this.updateTimeLabel();
      this.scheduleRefresh();
    }, this.autoplayMs);
  }

  private updateTimeLabel(): void {
    if (this.view.mode === "weekly-overlay") {
      const day = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"][
        Math.floor(this.view.timeIndex / 24)
      ];
      this.timeLabel.textContent = `${day} ${String(this.view.timeIndex % 24).padStart(2, "0")}:00`;
    } else {
      this.timeLabel.textContent = `+${this.view.timeIndex}h`;
    }
  }

  private onMapClick(ev: MouseEvent): void {
    const target = ev.target as Element | null;
    if (target && target.closest("#zoom-hint")) return;
    const sid = target?.getAttribute?.("data-segment");
    if (sid) {
      void this.inspectSegment(sid);
      return;
    }
    const rect = this.mapEl.getBoundingClientRect();
    const x = ev.clientX - rect.left;
    const y = ev.clientY - rect.top;
    const at = viewportToLonLat(x, y, this.view.center, this.view.zoom, this.w, this.h);
    void this.inspectPoint(at);
  }

  // --------------------------------------------------------------- network

  private track<T>(p: Promise<T>): Promise<T> {
    this.pending++;
    return p.finally(() => {
      this.pending--;
    });
  }

  showBanner(): void {
    this.banner.hidden = false;
  }

  clearBanner(): void {
    this.banner.hidden = true;
  }

  get bannerVisible(): boolean {
    return !this.banner.hidden;
  }

  /** Debounced tile refresh: one tile-set request per settled change. */
  scheduleRefresh(): void {
    if (this.debounceTimer) clearTimeout(this.debounceTimer);
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      void this.refreshTilesNow();
    }, this.debounceMs);
  }

  async refreshTilesNow(): Promise<void> {
    const seq = ++this.refreshSeq;
    this.refreshCount++;
    const urls = tileUrls(this.view, this.w, this.h, this.minRoadZoom);
    const roadMode = this.view.mode === "road-forecast";
    this.hintEl.hidden = !(roadMode && urls.length === 0);
    if (roadMode) {
      this.tileLayer.innerHTML = "";
      if (urls.length === 0) {
        this.roadLayer.innerHTML = "";
        return;
      }
      await this.track(this.drawRoadTiles(urls, seq));
    } else {
      this.roadLayer.innerHTML = "";
      await this.track(this.drawRasterTiles(seq));
    }
  }

  private async drawRasterTiles(seq: number): Promise<void> {
    const placed = visibleTiles(this.view.center, this.view.zoom, this.w, this.h);
    this.tileLayer.innerHTML = "";
    const jobs = placed.map(async (t) => {
      const url = `/tiles/overlay/${this.view.timeIndex}/${t.z}/${t.x}/${t.y}.png`;
      const cell = document.createElement("div");
      cell.className = "tile";
      cell.style.left = `${t.left}px`;
      cell.style.top = `${t.top}px`;
      this.tileLayer.appendChild(cell);
      try {
        const blob = await this.client.overlayTile(url);
        if (seq !== this.refreshSeq) return;
        cell.classList.add("tile-loaded");
        if (typeof URL !== "undefined" && typeof URL.createObjectURL === "function") {
          const img = document.createElement("img");
          img.width = TILE_SIZE;
          img.height = TILE_SIZE;
          try {
            img.src = URL.createObjectURL(blob);
          } catch {
            // headless DOMs may lack object URLs; the fetch already proved
            // the tile renders
          }
          cell.appendChild(img);
        }
        this.clearBanner();
      } catch (err) {
        if (seq !== this.refreshSeq) return;
        cell.classList.add("tile-error");
        const retry = document.createElement("button");
        retry.className = "retry";
        retry.textContent = "retry";
        retry.addEventListener("click", (ev) => {
          ev.stopPropagation();
          void this.refreshTilesNow();
        });
        cell.appendChild(retry);
        if (isNetworkError(err)) this.showBanner();
      }
    });
    await Promise.all(jobs);
  }

  private async drawRoadTiles(urls: string[], seq: number): Promise<void> {
    const docs: RoadTileDoc[] = [];
    let failed = false;
    await Promise.all(
      urls.map(async (url) => {
        try {
          docs.push(await this.client.roadTile(url));
        } catch (err) {
          failed = true;
          if (isNetworkError(err)) this.showBanner();
        }
      }),
    );
    if (seq !== this.refreshSeq) return;
    const byId = new Map<string, RoadTileSegment>();
    for (const doc of docs) {
      for (const seg of doc.segments) byId.set(seg.id, seg);
    }
    this.roadLayer.innerHTML = "";
    for (const seg of byId.values()) {
      const pts = seg.coords
        .map(([lon, lat]) => {
          const p = viewportPixel({ lat, lon }, this.view.center, this.view.zoom, this.w, this.h);
          return `${p.x.toFixed(1)},${p.y.toFixed(1)}`;
        })
        .join(" ");
      const line = document.createElementNS(SVG_NS, "polyline");
      line.setAttribute("points", pts);
      line.setAttribute("fill", "none");
      line.setAttribute("stroke", rampCss(Math.max(seg.score, 0.05)));
      line.setAttribute("stroke-width", "3");
      line.setAttribute("class", "road-seg");
      line.setAttribute("data-segment", seg.id);
      this.roadLayer.appendChild(line);
    }
    if (!failed) this.clearBanner();
  }

  // ---------------------------------------------------------------- panels

  async inspectPoint(at: LonLat): Promise<void> {
    this.panelAbort?.abort();
    const ctl = new AbortController();
    this.panelAbort = ctl;
    this.view = { ...this.view, selected: { kind: "point", at } };
    try {
      const [risk, timeline] = await this.track(
        Promise.all([
          this.client.risk(at.lat, at.lon, ctl.signal),
          this.client.timeline(at.lat, at.lon, ctl.signal),
        ]),
      );
      if (ctl.signal.aborted) return;
      this.panelEl.innerHTML = pointPanelHtml(risk, timeline);
      const link = this.panelEl.querySelector<HTMLButtonElement>(".segment-link");
      link?.addEventListener("click", () => void this.inspectSegment(link.dataset.segment!));
      this.clearBanner();
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") return;
      this.panelEl.innerHTML = errorPanelHtml(err);
      if (isNetworkError(err)) this.showBanner();
    }
  }

  async inspectSegment(id: string): Promise<void> {
    this.panelAbort?.abort();
    const ctl = new AbortController();
    this.panelAbort = ctl;
    this.view = { ...this.view, selected: { kind: "segment", id } };
    try {
      const detail = await this.track(this.client.segment(id, ctl.signal));
      if (ctl.signal.aborted) return;
      this.panelEl.innerHTML = segmentPanelHtml(detail);
      this.highlight(detail.geometry);
      this.clearBanner();
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") return;
      if (err instanceof ApiError && err.code === "SEGMENT_NOT_FOUND") {
        this.panelEl.innerHTML = notFoundHtml(id);
        this.panelEl
          .querySelector(".notice-dismiss")
          ?.addEventListener("click", () => {
            this.panelEl.innerHTML = `<p class="muted">click the map to score a point</p>`;
          });
        return;
      }
      this.panelEl.innerHTML = errorPanelHtml(err);
      if (isNetworkError(err)) this.showBanner();
    }
  }

  private highlight(coords: [number, number][]): void {
    this.highlightLayer.innerHTML = "";
    const pts = coords
      .map(([lon, lat]) => {
        const p = viewportPixel({ lat, lon }, this.view.center, this.view.zoom, this.w, this.h);
        return `${p.x.toFixed(1)},${p.y.toFixed(1)}`;
      })
      .join(" ");
    const line = document.createElementNS(SVG_NS, "polyline");
    line.setAttribute("points", pts);
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", "#08f");
    line.setAttribute("stroke-width", "5");
    line.setAttribute("class", "highlight");
    this.highlightLayer.appendChild(line);
  }
}
