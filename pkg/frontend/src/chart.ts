import type { Alert, TimelinePoint } from "./types.js";

/**
 * Render the waste-area timeline as an inline SVG string.
 *
 * Pure string-in, string-out so it can be tested without a DOM. Points are
 * plotted in ascending acquired_at order; alert timestamps appear as
 * vertical markers. Units are m² throughout, straight off the API.
 */
export function timelineChart(
  timeline: TimelinePoint[],
  alerts: Alert[] = [],
  width = 640,
  height = 220,
): string {
  if (timeline.length === 0) {
    return '<p class="placeholder">no data yet</p>';
  }
  const points = [...timeline].sort((a, b) =>
    a.acquired_at < b.acquired_at ? -1 : a.acquired_at > b.acquired_at ? 1 : 0,
  );
  const pad = 28;
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  const times = points.map((p) => Date.parse(p.acquired_at));
  const t0 = times[0];
  const t1 = times[times.length - 1];
  const span = Math.max(t1 - t0, 1);
  const maxArea = Math.max(...points.map((p) => p.waste_area_m2), 1);

  const x = (t: number) => pad + ((t - t0) / span) * innerW;
  const y = (area: number) => pad + innerH - (area / maxArea) * innerH;

  const coords = points.map((p, i) => ({
    px: points.length === 1 ? pad + innerW / 2 : x(times[i]),
    py: y(p.waste_area_m2),
    point: p,
  }));

  const polyline = coords.map((c) => `${c.px.toFixed(1)},${c.py.toFixed(1)}`).join(" ");
  const circles = coords
    .map(
      (c) =>
        `<circle class="pt" data-scene="${esc(c.point.scene_id)}" ` +
        `data-area="${c.point.waste_area_m2}" cx="${c.px.toFixed(1)}" ` +
        `cy="${c.py.toFixed(1)}" r="3"><title>${esc(c.point.scene_id)}: ` +
        `${c.point.waste_area_m2} m²</title></circle>`,
    )
    .join("");
  const markers = alerts
    .map((a) => Date.parse(a.triggered_at))
    .filter((t) => t >= t0 && t <= t1)
    .map(
      (t) =>
        `<line class="alert-marker" x1="${x(t).toFixed(1)}" y1="${pad}" ` +
        `x2="${x(t).toFixed(1)}" y2="${pad + innerH}"/>`,
    )
    .join("");

  return (
    `<svg class="timeline" viewBox="0 0 ${width} ${height}" role="img" ` +
    `aria-label="waste area over time">` +
    `<line class="axis" x1="${pad}" y1="${pad + innerH}" x2="${pad + innerW}" y2="${pad + innerH}"/>` +
    markers +
    `<polyline class="series" fill="none" points="${polyline}"/>` +
    circles +
    `</svg>`
  );
}

export function esc(raw: string): string {
  return raw
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}
