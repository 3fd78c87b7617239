// Score color ramp, duplicated from the service's documented stops so road
// strokes match raster tile pixels. Step function: a score takes the color
// of the last stop at or below it.

export type Rgba = [number, number, number, number];

export const RAMP_STOPS: ReadonlyArray<readonly [number, Rgba]> = [
  [0.0, [0, 0, 0, 0]],
  [0.25, [255, 220, 0, 160]],
  [0.5, [255, 140, 0, 190]],
  [0.75, [220, 30, 30, 220]],
  [0.9, [130, 0, 20, 240]],
];

export function rampColor(score: number): Rgba {
  let color: Rgba = RAMP_STOPS[0]![1];
  for (const [threshold, rgba] of RAMP_STOPS) {
    if (score >= threshold) color = rgba;
    else break;
  }
  return color;
}

export function rampCss(score: number): string {
  const [r, g, b, a] = rampColor(score);
  return `rgba(${r},${g},${b},${(a / 255).toFixed(3)})`;
}
