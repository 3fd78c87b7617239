// @vitest-environment happy-dom
import { beforeEach, describe, expect, it } from "vitest";
import { App } from "../src/app";
import { metaDoc, riskDoc, roadTileDoc, segmentDoc, timelineDoc } from "./fixtures";

function json(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "content-type": "application/json" },
  });
}

const PNG_STUB = new Uint8Array([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

interface FakeService {
  fetchFn: (url: string, init?: RequestInit) => Promise<Response>;
  calls: string[];
  failTiles?: boolean;
}

function fakeService(opts: { failTiles?: boolean } = {}): FakeService {
  const calls: string[] = [];
  const svc: FakeService = {
    calls,
    failTiles: opts.failTiles,
    fetchFn: async (url) => {
      calls.push(url);
      if (url.startsWith("/api/meta")) return json(metaDoc);
      if (url.startsWith("/api/risk")) return json(riskDoc);
      if (url.startsWith("/api/timeline")) return json(timelineDoc);
      if (url.startsWith("/api/segments/")) {
        const id = decodeURIComponent(url.slice("/api/segments/".length));
        if (id !== segmentDoc.id) {
          return json({ error: { code: "SEGMENT_NOT_FOUND", message: `no active segment '${id}'` } }, 404);
        }
        return json(segmentDoc);
      }
      const road = /^\/tiles\/roads\/\d+\/(\d+)\/(\d+)\/(\d+)\.json$/.exec(url);
      if (road) return json(roadTileDoc(Number(road[1]), Number(road[2]), Number(road[3])));
      if (url.startsWith("/tiles/overlay/")) {
        if (svc.failTiles) throw new TypeError("connection refused");
        return new Response(PNG_STUB, { status: 200, headers: { "content-type": "image/png" } });
      }
      return json({ error: { code: "NOT_FOUND", message: url } }, 404);
    },
  };
  return svc;
}

function makeApp(svc: FakeService): App {
  document.body.innerHTML = `<div id="app"></div>`;
  return new App(document.getElementById("app")!, {
    fetchFn: svc.fetchFn,
    center: { lat: 39.5, lon: -75.5 },
    zoom: 12,
    viewport: { w: 512, h: 512 },
    debounceMs: 20,
  });
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

describe("app wiring", () => {
  let svc: FakeService;
  let app: App;

  beforeEach(async () => {
    svc = fakeService();
    app = makeApp(svc);
    await app.init();
    await app.settle();
  });

  it("boots in weekly mode with the full 0..167 scrubber", () => {
    const scrubber = document.querySelector<HTMLInputElement>("#scrubber")!;
    expect(scrubber.max).toBe("167");
    expect(scrubber.value).toBe("0");
    expect(svc.calls.some((u) => u.startsWith("/tiles/overlay/0/"))).toBe(true);
    expect(app.bannerVisible).toBe(false);
  });

  it("debounces scrubbing into one tile refresh per settled change", async () => {
    const before = app.refreshCount;
    const scrubber = document.querySelector<HTMLInputElement>("#scrubber")!;
    for (const v of ["3", "17", "42", "80"]) {
      scrubber.value = v;
      scrubber.dispatchEvent(new Event("input", { bubbles: true }));
    }
    await sleep(60);
    await app.settle();
    expect(app.refreshCount - before).toBe(1);
    expect(svc.calls.some((u) => u.startsWith("/tiles/overlay/80/"))).toBe(true);
    expect(svc.calls.some((u) => u.startsWith("/tiles/overlay/42/"))).toBe(false);
  });

  it("switches modes, resetting the scrubber to the 24h range", async () => {
    document.querySelector<HTMLButtonElement>("#mode-road")!.click();
    await app.settle();
    const scrubber = document.querySelector<HTMLInputElement>("#scrubber")!;
    expect(scrubber.max).toBe("23");
    expect(scrubber.value).toBe("0");
    expect(svc.calls.some((u) => /^\/tiles\/roads\/0\/12\//.test(u))).toBe(true);
    expect(document.querySelectorAll("#road-layer .road-seg").length).toBeGreaterThan(0);
  });

  it("prompts to zoom in instead of requesting road tiles below min zoom", async () => {
    document.querySelector<HTMLButtonElement>("#zoom-out")!.click();
    document.querySelector<HTMLButtonElement>("#zoom-out")!.click();
    document.querySelector<HTMLButtonElement>("#zoom-out")!.click(); // z 9
    await app.settle();
    svc.calls.length = 0;
    document.querySelector<HTMLButtonElement>("#mode-road")!.click();
    await app.settle();
    expect(svc.calls.filter((u) => u.startsWith("/tiles/roads/"))).toEqual([]);
    expect(document.querySelector<HTMLElement>("#zoom-hint")!.hidden).toBe(false);
  });

  it("map click fetches risk and timeline and renders the point panel", async () => {
    document.querySelector<HTMLElement>("#map")!.dispatchEvent(
      new MouseEvent("click", { clientX: 256, clientY: 256, bubbles: true }),
    );
    await app.settle();
    expect(svc.calls.some((u) => u.startsWith("/api/risk?lat="))).toBe(true);
    expect(svc.calls.some((u) => u.startsWith("/api/timeline?lat="))).toBe(true);
    const spark = document.querySelector("#panel svg.sparkline");
    expect(spark?.getAttribute("data-points")).toBe("24");
  });

  it("nearest-segment link opens the 168-bar segment panel", async () => {
    document.querySelector<HTMLElement>("#map")!.dispatchEvent(
      new MouseEvent("click", { clientX: 256, clientY: 256, bubbles: true }),
    );
    await app.settle();
    document.querySelector<HTMLButtonElement>("#panel .segment-link")!.click();
    await app.settle();
    expect(svc.calls.some((u) => u === "/api/segments/RA%230")).toBe(true);
    expect(document.querySelectorAll("#panel svg.bars rect").length).toBe(168);
    expect(document.querySelectorAll("#highlight-layer polyline").length).toBe(1);
  });

  it("stale segment ids surface a dismissible not-found notice", async () => {
    await app.inspectSegment("RA#99");
    const notice = document.querySelector<HTMLElement>("#panel .notice")!;
    expect(notice.getAttribute("data-code")).toBe("SEGMENT_NOT_FOUND");
    document.querySelector<HTMLButtonElement>("#panel .notice-dismiss")!.click();
    expect(document.querySelector("#panel .notice")).toBeNull();
  });
});

describe("degraded states", () => {
  it("failed tiles render a retry badge and raise the banner", async () => {
    const svc = fakeService({ failTiles: true });
    const app = makeApp(svc);
    await app.init();
    await app.settle();
    expect(document.querySelectorAll("#tile-layer .tile-error").length).toBeGreaterThan(0);
    expect(document.querySelectorAll("#tile-layer .tile-error .retry").length).toBeGreaterThan(0);
    expect(app.bannerVisible).toBe(true);
    // recovery: tiles come back, banner clears on the next refresh
    svc.failTiles = false;
    document.querySelector<HTMLButtonElement>("#tile-layer .retry")!.click();
    await app.settle();
    expect(app.bannerVisible).toBe(false);
    expect(document.querySelectorAll("#tile-layer .tile-error").length).toBe(0);
  });

  it("a dead service raises the banner but leaves the map interactive", async () => {
    const calls: string[] = [];
    document.body.innerHTML = `<div id="app"></div>`;
    const app = new App(document.getElementById("app")!, {
      fetchFn: async (url) => {
        calls.push(url);
        throw new TypeError("connection refused");
      },
      debounceMs: 20,
    });
    await app.init();
    await app.settle();
    expect(app.bannerVisible).toBe(true);
    // the map still answers clicks with an inline error, not a blank panel
    document.querySelector<HTMLElement>("#map")!.dispatchEvent(
      new MouseEvent("click", { clientX: 100, clientY: 100, bubbles: true }),
    );
    await app.settle();
    expect(document.querySelector("#panel .panel-error")).not.toBeNull();
    expect(calls.some((u) => u.startsWith("/api/risk"))).toBe(true);
  });
});
