import { esc, timelineChart } from "./chart.js";
import type { DashboardState } from "./store.js";
import { formatArea, formatChange } from "./types.js";
import type { Alert, Aoi, AoiForm } from "./types.js";

/** HTML string renderers; app.ts assigns them into the page. */

export function renderBadge(count: number): string {
  return `<span class="badge" data-count="${count}">${count}</span>`;
}

export function renderBanner(state: DashboardState): string {
  if (!state.offline) return "";
  return (
    '<div class="banner error">service unreachable ' +
    '<button data-action="retry">retry</button></div>'
  );
}

export function renderToast(state: DashboardState): string {
  if (state.toast === null) return "";
  return (
    `<div class="toast">${esc(state.toast)} ` +
    '<button data-action="dismiss-toast">dismiss</button></div>'
  );
}

export function renderAoiList(state: DashboardState): string {
  const rows = state.aois
    .map((aoi) => {
      const unacked = state.alerts.filter((a) => a.aoi_id === aoi.aoi_id).length;
      return (
        `<tr data-aoi="${esc(aoi.aoi_id)}">` +
        `<td><a href="#/aois/${esc(aoi.aoi_id)}" data-action="open">${esc(aoi.name)}</a></td>` +
        `<td>${esc(aoi.pipeline)}</td>` +
        `<td class="num">${aoi.alert_threshold}</td>` +
        `<td class="num">${unacked > 0 ? renderBadge(unacked) : ""}</td>` +
        `<td><button data-action="edit" data-aoi="${esc(aoi.aoi_id)}">edit</button></td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    '<table class="aois"><thead><tr>' +
    "<th>area</th><th>pipeline</th><th>threshold</th><th>alerts</th><th></th>" +
    `</tr></thead><tbody>${rows}</tbody></table>` +
    '<button data-action="create">add area</button>'
  );
}

export function renderDetail(state: DashboardState): string {
  if (state.view === "not-found") {
    return (
      `<p class="error">no such area: ${esc(state.selectedId ?? "")}</p>` +
      '<a href="#/" data-action="back">back to list</a>'
    );
  }
  const aoi = state.aois.find((a) => a.aoi_id === state.selectedId);
  const title = aoi ? esc(aoi.name) : esc(state.selectedId ?? "");
  const latest = state.timeline.at(-1);
  const history = state.alerts.filter((a) => a.aoi_id === state.selectedId);
  const summary = latest
    ? `<p class="latest">latest: ${formatArea(latest.waste_area_m2)} ` +
      `(scene ${esc(latest.scene_id)}, ${esc(latest.acquired_at)})</p>`
    : "";
  return (
    `<h2>${title}</h2>` +
    summary +
    timelineChart(state.timeline, history) +
    renderImagery(state) +
    renderAlerts(history)
  );
}

function renderImagery(state: DashboardState): string {
  if (state.overlayUrl === null) return "";
  const heat =
    state.showHeatmap && state.heatmapUrl !== null
      ? `<img class="layer heatmap" alt="confidence heatmap" src="${esc(state.heatmapUrl)}"/>`
      : "";
  return (
    '<div class="imagery">' +
    `<img class="layer overlay" alt="classified overlay" src="${esc(state.overlayUrl)}"/>` +
    heat +
    `<label><input type="checkbox" data-action="toggle-heatmap"` +
    `${state.showHeatmap ? " checked" : ""}/> confidence heatmap</label>` +
    "</div>"
  );
}

export function renderAlerts(alerts: Alert[]): string {
  if (alerts.length === 0) return '<p class="placeholder">no open alerts</p>';
  const items = alerts
    .map(
      (a) =>
        `<li data-alert="${esc(a.alert_id)}">` +
        `${esc(a.triggered_at)}: ${formatArea(a.previous_area_m2)} → ` +
        `${formatArea(a.current_area_m2)} (${formatChange(a.relative_change)}) ` +
        `<button data-action="ack" data-alert="${esc(a.alert_id)}">acknowledge</button>` +
        `</li>`,
    )
    .join("");
  return `<ul class="alerts">${items}</ul>`;
}

export function renderForm(form: AoiForm, errors: Record<string, string>, creating: boolean): string {
  const field = (name: keyof AoiForm, label: string, extra = "") => {
    const error = errors[name] ? `<span class="field-error">${esc(errors[name])}</span>` : "";
    return (
      `<label>${label} <input name="${name}" value="${esc(form[name])}"${extra}/>${error}</label>`
    );
  };
  return (
    `<form data-mode="${creating ? "create" : "edit"}">` +
    field("aoi_id", "id", creating ? "" : " readonly") +
    field("name", "name") +
    `<label>pipeline <select name="pipeline">` +
    `<option value="hotspot"${form.pipeline === "hotspot" ? " selected" : ""}>hotspot</option>` +
    `<option value="blockage"${form.pipeline === "blockage" ? " selected" : ""}>blockage</option>` +
    `</select></label>` +
    field("model_path", "model") +
    field("ingest_dir", "ingest directory") +
    field("alert_threshold", "alert threshold") +
    field("notify", "notify (comma separated)") +
    (errors.form ? `<p class="field-error">${esc(errors.form)}</p>` : "") +
    '<button type="submit">save</button>' +
    "</form>"
  );
}

export function renderApp(state: DashboardState): string {
  const body =
    state.view === "list"
      ? renderAoiList(state)
      : renderDetail(state);
  const form =
    state.form !== null
      ? renderForm(state.form, state.formErrors, state.formMode !== "edit")
      : "";
  return (
    renderBanner(state) +
    renderToast(state) +
    `<header><h1><a href="#/" data-action="back">riverwatch</a></h1>` +
    `${renderBadge(state.alerts.length)}</header>` +
    `<main>${body}${form}</main>`
  );
}
