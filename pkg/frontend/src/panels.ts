// Inspector panel HTML. Pure string builders so the render path is easy to
// test; the app attaches event handlers after insertion.

import { barsSvg, sparklineSvg } from "./charts";
import type { RiskResponse, SegmentDetail, TimelineResponse, WeatherSource } from "./types";
import { ApiError } from "./api";

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function sourceBadges(sources: WeatherSource[]): string {
  const counts = new Map<string, number>();
  for (const s of sources) counts.set(s, (counts.get(s) ?? 0) + 1);
  return Array.from(counts.entries())
    .map(([source, n]) => {
      const fallback = source === "climatology";
      const label = fallback ? `${source} (fallback)` : source;
      const cls = fallback ? "badge badge-fallback" : "badge";
      return `<span class="${cls}" data-source="${esc(source)}">${esc(label)} &times;${n}</span>`;
    })
    .join(" ");
}

export function pointPanelHtml(risk: RiskResponse, timeline: TimelineResponse): string {
  if (timeline.note === "no_coverage") {
    return (
      `<div class="panel-empty" data-note="no_coverage">` +
      `<h2>No coverage</h2><p>This point is outside the scored area.</p></div>`
    );
  }
  const nearest = risk.nearest_segment
    ? `<p>nearest road: <button class="segment-link" data-segment="${esc(risk.nearest_segment.id)}">` +
      `${esc(risk.nearest_segment.id)}</button> at ${Math.round(risk.nearest_segment.distance_m)} m` +
      (risk.nearest_segment.segment_score != null
        ? `, score ${risk.nearest_segment.segment_score.toFixed(3)}`
        : "") +
      `</p>`
    : `<p class="muted">no road within matching range</p>`;
  const spark = sparklineSvg(timeline.entries.map((e) => e.score));
  return (
    `<div class="panel-point">` +
    `<h2>cell ${esc(risk.cell_id)}</h2>` +
    `<p class="score">risk now: <strong>${risk.baseline_score.toFixed(3)}</strong> at ${esc(risk.at)}</p>` +
    nearest +
    `<p class="badges">${sourceBadges(risk.sources)}</p>` +
    `<h3>next 24 hours</h3>${spark}` +
    `</div>`
  );
}

export function segmentPanelHtml(detail: SegmentDetail): string {
  const series = detail.series.map((e) => e.score);
  const spark = detail.note === "forecast_unavailable"
    ? `<p class="muted">forecast unavailable</p>`
    : `<h3>24-hour forecast</h3>${sparklineSvg(series)}`;
  const sev = detail.history.severity_mean;
  return (
    `<div class="panel-segment" data-segment="${esc(detail.id)}">` +
    `<h2>${esc(detail.id)}</h2>` +
    `<p>${esc(detail.class)} road, ${Math.round(detail.length_m)} m, ` +
    `${detail.history.total} past events` +
    (sev != null ? `, mean severity ${sev.toFixed(2)}` : "") +
    `</p>` +
    `<h3>weekly history (168 hours)</h3>` +
    barsSvg(detail.history.same_how) +
    spark +
    `</div>`
  );
}

export function notFoundHtml(segmentId: string): string {
  return (
    `<div class="notice" data-code="SEGMENT_NOT_FOUND">` +
    `<p>No active segment <code>${esc(segmentId)}</code>; it may have been ` +
    `retired by a data refresh.</p>` +
    `<button class="notice-dismiss">dismiss</button></div>`
  );
}

export function errorPanelHtml(err: unknown): string {
  if (err instanceof ApiError) {
    const fields = err.fields.length
      ? `<p class="muted">fields: ${err.fields.map(esc).join(", ")}</p>`
      : "";
    return (
      `<div class="panel-error" data-code="${esc(err.code)}">` +
      `<p>${esc(err.message)}</p>${fields}</div>`
    );
  }
  return `<div class="panel-error" data-code="UNKNOWN"><p>something went wrong</p></div>`;
}
