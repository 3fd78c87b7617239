import { describe, expect, it } from "vitest";
import { RAMP_STOPS, rampColor, rampCss } from "../src/ramp";

describe("score ramp", () => {
  it("duplicates the service's documented stops exactly", () => {
    expect(RAMP_STOPS).toEqual([
      [0.0, [0, 0, 0, 0]],
      [0.25, [255, 220, 0, 160]],
      [0.5, [255, 140, 0, 190]],
      [0.75, [220, 30, 30, 220]],
      [0.9, [130, 0, 20, 240]],
    ]);
  });

  it("steps at stop thresholds, inclusive on the right", () => {
    expect(rampColor(0)).toEqual([0, 0, 0, 0]);
    expect(rampColor(0.2499)).toEqual([0, 0, 0, 0]);
    expect(rampColor(0.25)).toEqual([255, 220, 0, 160]);
    expect(rampColor(0.49)).toEqual([255, 220, 0, 160]);
    expect(rampColor(0.5)).toEqual([255, 140, 0, 190]);
    expect(rampColor(0.75)).toEqual([220, 30, 30, 220]);
    expect(rampColor(0.9)).toEqual([130, 0, 20, 240]);
    expect(rampColor(1.0)).toEqual([130, 0, 20, 240]);
  });

  it("renders css rgba with normalized alpha", () => {
    expect(rampCss(0.3)).toBe("rgba(255,220,0,0.627)");
  });
});
