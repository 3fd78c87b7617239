import { describe, expect, it } from "vitest";
import {
  clampIndex,
  indexMax,
  initialView,
  setIndex,
  setMode,
  setZoom,
  stepIndex,
  tileUrls,
} from "../src/view";

const base = initialView({ lat: 39.5, lon: -75.5 }, 11);

describe("time scrubber ranges", () => {
  it("weekly overlay runs 0..167", () => {
    expect(indexMax("weekly-overlay")).toBe(167);
    expect(clampIndex("weekly-overlay", 500)).toBe(167);
    expect(clampIndex("weekly-overlay", -3)).toBe(0);
  });

  it("road forecast runs 0..23", () => {
    expect(indexMax("road-forecast")).toBe(23);
    expect(clampIndex("road-forecast", 24)).toBe(23);
  });

  it("mode switch resets the index to 0", () => {
    const scrubbed = setIndex(base, 93);
    expect(scrubbed.timeIndex).toBe(93);
    const road = setMode(scrubbed, "road-forecast");
    expect(road.timeIndex).toBe(0);
    expect(road.mode).toBe("road-forecast");
  });

  it("autoplay wraps at the end of the range", () => {
    const last = setIndex(base, 167);
    expect(stepIndex(last).timeIndex).toBe(0);
    const road = setIndex(setMode(base, "road-forecast"), 23);
    expect(stepIndex(road).timeIndex).toBe(0);
    expect(stepIndex(base).timeIndex).toBe(1);
  });
});

describe("tile url construction", () => {
  it("weekly urls carry the hour of week", () => {
    const urls = tileUrls(base, 512, 512);
    expect(urls.length).toBeGreaterThan(0);
    for (const u of urls) expect(u).toMatch(/^\/tiles\/overlay\/0\/11\/\d+\/\d+\.png$/);
    const later = tileUrls(setIndex(base, 80), 512, 512);
    for (const u of later) expect(u).toContain("/tiles/overlay/80/");
  });

  it("road mode below the minimum zoom requests nothing", () => {
    const road = setMode(setZoom(base, 8), "road-forecast");
    expect(tileUrls(road, 512, 512)).toEqual([]);
    const closeEnough = setZoom(road, 12);
    const urls = tileUrls(closeEnough, 512, 512);
    expect(urls.length).toBeGreaterThan(0);
    for (const u of urls) expect(u).toMatch(/^\/tiles\/roads\/0\/12\/\d+\/\d+\.json$/);
  });

  it("is a pure function of the view and viewport", () => {
    const a = tileUrls(base, 640, 480);
    const b = tileUrls({ ...base }, 640, 480);
    expect(a).toEqual(b);
    expect(tileUrls(setIndex(base, 1), 640, 480)).not.toEqual(a);
    expect(tileUrls(base, 768, 480)).not.toEqual(a);
  });
});
