// @vitest-environment happy-dom
//
// Criterion 11: a scripted headless session against the real service. The
// pipeline builds a small deployment, the service process serves it, and the
// app runs in a headless DOM with every request routed through an
// intercepting proxy that records paths. The session scrubs both modes,
// scores a point, opens a segment, and the proxy log is checked against the
// documented endpoint set. A dead-service run must raise the degraded banner.
//
// All wire traffic uses node:http directly; the DOM environment's fetch
// enforces same-origin rules that do not apply to this harness.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import http from "node:http";
import net from "node:net";
import os from "node:os";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { App } from "../src/app";

const PY = process.env.PYTHON ?? "python3";
const PIPELINE = [
  "ingest",
  "build-dataset",
  "train-baseline",
  "build-segments",
  "match-events",
  "build-segment-events",
  "train-segment",
  "build-overlay",
  "refresh-roads",
];

const DOCUMENTED: RegExp[] = [
  /^\/$/,
  /^\/about$/,
  /^\/contact$/,
  /^\/health$/,
  /^\/api\/meta$/,
  /^\/api\/stations$/,
  /^\/api\/refresh$/,
  /^\/api\/risk\?/,
  /^\/api\/timeline\?/,
  /^\/api\/roads\?/,
  /^\/api\/segments\/[^/]+$/,
  /^\/tiles\/overlay\/\d+\/\d+\/\d+\/\d+\.png$/,
  /^\/tiles\/roads\/\d+\/\d+\/\d+\/\d+\.json$/,
];

function cli(args: string[]): void {
  const run = spawnSync(PY, ["-m", "roadrisk.cli", ...args], { encoding: "utf8" });
  if (run.status !== 0) {
    throw new Error(`roadrisk ${args[0]} failed:\n${run.stdout}\n${run.stderr}`);
  }
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.listen(0, "127.0.0.1", () => {
      const port = (srv.address() as net.AddressInfo).port;
      srv.close(() => resolve(port));
    });
    srv.on("error", reject);
  });
}

// fetch-shaped wrapper over node:http so neither CORS nor the DOM
// environment's network stack get between the app and the service
function nodeFetch(url: string, init?: RequestInit): Promise<Response> {
  return new Promise((resolve, reject) => {
    let aborted = false;
    const req = http.request(url, { method: init?.method ?? "GET" }, (res) => {
      const chunks: Buffer[] = [];
      res.on("data", (c: Buffer) => chunks.push(c));
      res.on("end", () => {
        const body = Buffer.concat(chunks);
        resolve(
          new Response(body.length ? body : null, {
            status: res.statusCode ?? 502,
            headers: {
              "content-type": String(res.headers["content-type"] ?? "application/octet-stream"),
            },
          }),
        );
      });
    });
    req.on("error", (err) => {
      reject(aborted ? new DOMException("aborted", "AbortError") : err);
    });
    const signal = init?.signal;
    if (signal) {
      if (signal.aborted) {
        aborted = true;
        req.destroy();
      } else {
        signal.addEventListener("abort", () => {
          aborted = true;
          req.destroy();
        });
      }
    }
    req.end();
  });
}

async function waitForHealth(base: string, timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await nodeFetch(`${base}/health`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("service did not come up");
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

let ws: string;
let service: ChildProcess | null = null;
let proxy: http.Server | null = null;
let proxyBase = "";
let svcBase = "";
const recorded: string[] = [];
let mapCenter = { lat: 39.6, lon: -75.7 };

beforeAll(async () => {
  ws = mkdtempSync(path.join(os.tmpdir(), "ui-session-"));
  writeFileSync(path.join(ws, "config.json"), JSON.stringify({ seed: 11, service: { providers: [] } }));
  const world = path.join(ws, "world.json");
  writeFileSync(
    world,
    JSON.stringify({ seed: 11, n_roads: 16, n_stations: 2, years: [2019, 2020], base_rate: 0.06 }),
  );
  cli(["synth", "--spec", world, "--out", path.join(ws, "data")]);
  for (const stage of PIPELINE) cli([stage, "--out", ws]);

  const svcPort = await freePort();
  svcBase = `http://127.0.0.1:${svcPort}`;
  service = spawn(PY, ["-m", "roadrisk.cli", "serve", "--out", ws, "--port", String(svcPort)], {
    stdio: "ignore",
  });
  await waitForHealth(svcBase);

  // center the session on a real road so clicks land on covered cells
  const bboxQuery = "min_lat=38.9&min_lon=-76.6&max_lat=40.3&max_lon=-74.8";
  const roadsRes = await nodeFetch(`${svcBase}/api/roads?${bboxQuery}`);
  const roads = (await roadsRes.json()) as { segments: { coords: [number, number][] }[] };
  const [lon, lat] = roads.segments[0]!.coords[0]!;
  mapCenter = { lat, lon };

  const proxyPort = await freePort();
  proxyBase = `http://127.0.0.1:${proxyPort}`;
  proxy = http.createServer((req, res) => {
    recorded.push(req.url ?? "");
    const up = http.request(
      `${svcBase}${req.url}`,
      { method: req.method },
      (upstream) => {
        res.writeHead(upstream.statusCode ?? 502, {
          "content-type": String(upstream.headers["content-type"] ?? "application/octet-stream"),
        });
        upstream.pipe(res);
      },
    );
    up.on("error", () => {
      res.writeHead(502);
      res.end();
    });
    req.pipe(up);
  });
  await new Promise<void>((resolve) => proxy!.listen(proxyPort, "127.0.0.1", resolve));
});

afterAll(async () => {
  if (proxy) await new Promise((resolve) => proxy!.close(resolve));
  if (service) {
    service.kill("SIGTERM");
    await new Promise((r) => setTimeout(r, 300));
    if (!service.killed) service.kill("SIGKILL");
  }
  rmSync(ws, { recursive: true, force: true });
});

describe("criterion 11: scripted headless session", () => {
  it("drives both modes, inspects a point and a segment, and stays on documented endpoints", async () => {
    document.body.innerHTML = `<div id="app"></div>`;
    const app = new App(document.getElementById("app")!, {
      baseUrl: proxyBase,
      fetchFn: nodeFetch,
      center: mapCenter,
      zoom: 12,
      viewport: { w: 512, h: 512 },
      debounceMs: 20,
    });
    await app.init();
    await app.settle();

    // weekly scrubber spans 0..167
    const scrubber = document.querySelector<HTMLInputElement>("#scrubber")!;
    expect(scrubber.min).toBe("0");
    expect(scrubber.max).toBe("167");
    expect(recorded.some((u) => /^\/tiles\/overlay\/0\//.test(u))).toBe(true);

    scrubber.value = "80";
    scrubber.dispatchEvent(new Event("input", { bubbles: true }));
    await sleep(60);
    await app.settle();
    expect(recorded.some((u) => /^\/tiles\/overlay\/80\//.test(u))).toBe(true);

    // forecast mode: scrubber resets and spans 0..23, road tiles flow
    document.querySelector<HTMLButtonElement>("#mode-road")!.click();
    await app.settle();
    expect(scrubber.max).toBe("23");
    expect(scrubber.value).toBe("0");
    expect(recorded.some((u) => /^\/tiles\/roads\/0\/12\//.test(u))).toBe(true);
    expect(document.querySelectorAll("#road-layer .road-seg").length).toBeGreaterThan(0);

    // a map click scores the point and renders the 24-point sparkline
    document.querySelector<HTMLElement>("#map")!.dispatchEvent(
      new MouseEvent("click", { clientX: 256, clientY: 256, bubbles: true }),
    );
    await app.settle();
    expect(recorded.some((u) => u.startsWith("/api/risk?lat="))).toBe(true);
    expect(recorded.some((u) => u.startsWith("/api/timeline?lat="))).toBe(true);
    const spark = document.querySelector("#panel svg.sparkline");
    expect(spark).not.toBeNull();
    expect(spark!.getAttribute("data-points")).toBe("24");

    // the nearest-segment link opens the 168-bar history panel
    const link = document.querySelector<HTMLButtonElement>("#panel .segment-link");
    expect(link).not.toBeNull();
    link!.click();
    await app.settle();
    expect(recorded.some((u) => u.startsWith("/api/segments/"))).toBe(true);
    expect(document.querySelectorAll("#panel svg.bars rect").length).toBe(168);

    // zero undocumented endpoint calls across the whole session
    const undocumented = recorded.filter((u) => !DOCUMENTED.some((rx) => rx.test(u)));
    expect(undocumented).toEqual([]);
    expect(recorded.length).toBeGreaterThan(10);
    app.destroy();
  });

  it("renders the degraded banner when the service is down", async () => {
    document.body.innerHTML = `<div id="app"></div>`;
    const app = new App(document.getElementById("app")!, {
      baseUrl: "http://127.0.0.1:9", // nothing listens here
      fetchFn: nodeFetch,
      center: mapCenter,
      zoom: 12,
      debounceMs: 20,
    });
    await app.init();
    await app.settle();
    expect(app.bannerVisible).toBe(true);
    expect(document.querySelector<HTMLElement>("#degraded-banner")!.hidden).toBe(false);
    app.destroy();
  });
});
