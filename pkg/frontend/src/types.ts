/** Wire types, mirroring the monitor API's JSON exactly. */

export type Pipeline = "hotspot" | "blockage";

export interface Aoi {
  aoi_id: string;
  name: string;
  pipeline: Pipeline;
  model_path: string;
  ingest_dir: string;
  alert_threshold: number;
  notify: string[];
}

export interface TimelinePoint {
  scene_id: string;
  acquired_at: string;
  waste_area_m2: number;
  waste_fraction: number;
}

export interface Alert {
  alert_id: string;
  aoi_id: string;
  triggered_at: string;
  previous_area_m2: number;
  current_area_m2: number;
  /** +inf travels as the string "inf" to stay valid JSON. */
  relative_change: number | "inf";
  previous_scene_id: string;
  current_scene_id: string;
  acknowledged: boolean;
}

export interface Observation {
  aoi_id: string;
  scene_id: string;
  acquired_at: string;
  waste_area_m2: number;
  waste_fraction: number;
  report_path: string;
}

export interface DetectionReport {
  scene_id: string;
  timestamp: string;
  waste_pixels: number;
  waste_area_m2: number;
  total_valid_pixels: number;
  waste_fraction: number;
  pipeline: Pipeline;
  quality_warning: boolean;
}

export interface LatestPayload {
  observation: Observation;
  report: DetectionReport;
}

export interface PollSummary {
  ingested: { aoi_id: string; scene_id: string }[];
  failed: { aoi_id: string; scene_dir: string; error: string }[];
  skipped: number;
}

export interface RuntimeConfig {
  api_base: string;
}

/** Create/edit form as the user types it; numbers arrive as strings. */
export interface AoiForm {
  aoi_id: string;
  name: string;
  pipeline: Pipeline;
  model_path: string;
  ingest_dir: string;
  alert_threshold: string;
  notify: string;
}

export function formatChange(change: number | "inf"): string {
  if (change === "inf") return "+inf%";
  const pct = change * 100;
  return `${pct >= 0 ? "+" : ""}${pct.toFixed(1)}%`;
}

export function formatArea(m2: number): string {
  return `${m2.toLocaleString("en-US", { maximumFractionDigits: 1 })} m²`;
}
