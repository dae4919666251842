import { ApiClient, ApiError } from "./api.js";
import type { Alert, Aoi, AoiForm, DetectionReport, Pipeline, TimelinePoint } from "./types.js";

export type View = "list" | "detail" | "not-found";

export interface DashboardState {
  view: View;
  aois: Aoi[];
  selectedId: string | null;
  timeline: TimelinePoint[];
  latestReport: DetectionReport | null;
  overlayUrl: string | null;
  heatmapUrl: string | null;
  showHeatmap: boolean;
  /** Unacknowledged alerts; the badge is always this list's length. */
  alerts: Alert[];
  form: AoiForm | null;
  formMode: "create" | "edit" | null;
  formErrors: Record<string, string>;
  /** Set when the API is unreachable; the UI offers a retry. */
  offline: boolean;
  toast: string | null;
}

export function emptyForm(pipeline: Pipeline = "hotspot"): AoiForm {
  return {
    aoi_id: "",
    name: "",
    pipeline,
    model_path: "",
    ingest_dir: "",
    alert_threshold: "0.2",
    notify: "",
  };
}

const TARGET_PATTERN = /^(mailto|webhook):.+$/;

/** Client-side checks matching the server's rules, so bad input never ships. */
export function validateForm(form: AoiForm, creating: boolean): Record<string, string> {
  const errors: Record<string, string> = {};
  if (creating && form.aoi_id.trim() === "") errors.aoi_id = "required";
  if (form.name.trim() === "") errors.name = "required";
  if (form.model_path.trim() === "") errors.model_path = "required";
  if (form.ingest_dir.trim() === "") errors.ingest_dir = "required";
  const threshold = Number(form.alert_threshold);
  if (!Number.isFinite(threshold) || threshold <= 0) {
    errors.alert_threshold = "must be a number greater than 0";
  }
  for (const target of parseTargets(form.notify)) {
    if (!TARGET_PATTERN.test(target)) {
      errors.notify = `"${target}" is not mailto:<addr> or webhook:<url>`;
      break;
    }
  }
  return errors;
}

export function parseTargets(raw: string): string[] {
  return raw
    .split(/[,\n]/)
    .map((t) => t.trim())
    .filter((t) => t !== "");
}

type Listener = (state: DashboardState) => void;

export class DashboardStore {
  private state: DashboardState = {
    view: "list",
    aois: [],
    selectedId: null,
    timeline: [],
    latestReport: null,
    overlayUrl: null,
    heatmapUrl: null,
    showHeatmap: false,
    alerts: [],
    form: null,
    formMode: null,
    formErrors: {},
    offline: false,
    toast: null,
  };
  private listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  getState(): DashboardState {
    return this.state;
  }

  get badgeCount(): number {
    return this.state.alerts.length;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private set(patch: Partial<DashboardState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  async refresh(): Promise<void> {
    try {
      const [aois, alerts] = await Promise.all([
        this.api.listAois(),
        this.api.alerts(false),
      ]);
      this.set({ aois, alerts, offline: false });
    } catch (err) {
      if (err instanceof ApiError) throw err;
      this.set({ offline: true });
    }
  }

  async openAoi(aoiId: string): Promise<void> {
    try {
      const timeline = await this.api.timeline(aoiId);
      sortByAcquired(timeline);
      const hasData = timeline.length > 0;
      let report: DetectionReport | null = null;
      if (hasData) report = (await this.api.latest(aoiId)).report;
      this.set({
        view: "detail",
        selectedId: aoiId,
        timeline,
        latestReport: report,
        overlayUrl: hasData ? this.api.overlayUrl(aoiId) : null,
        heatmapUrl: hasData ? this.api.heatmapUrl(aoiId) : null,
        showHeatmap: false,
        offline: false,
      });
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.set({ view: "not-found", selectedId: aoiId });
        return;
      }
      if (!(err instanceof ApiError)) {
        this.set({ offline: true });
        return;
      }
      throw err;
    }
  }

  openList(): void {
    this.set({ view: "list", selectedId: null, form: null, formMode: null, formErrors: {} });
  }

  toggleHeatmap(): void {
    this.set({ showHeatmap: !this.state.showHeatmap });
  }

  beginCreate(): void {
    this.set({ form: emptyForm(), formMode: "create", formErrors: {} });
  }

  beginEdit(aoi: Aoi): void {
    this.set({
      form: {
        aoi_id: aoi.aoi_id,
        name: aoi.name,
        pipeline: aoi.pipeline,
        model_path: aoi.model_path,
        ingest_dir: aoi.ingest_dir,
        alert_threshold: String(aoi.alert_threshold),
        notify: aoi.notify.join(", "),
      },
      formMode: "edit",
      formErrors: {},
    });
  }

  updateForm(field: keyof AoiForm, value: string): void {
    if (this.state.form === null) return;
    this.set({ form: { ...this.state.form, [field]: value } });
  }

  /**
   * Create or update from the current form. Validation failures stay local;
   * API rejections land in formErrors with the form untouched.
   */
  async submitForm(): Promise<boolean> {
    const form = this.state.form;
    if (form === null) return false;
    const creating = this.state.formMode !== "edit";
    const errors = validateForm(form, creating);
    if (Object.keys(errors).length > 0) {
      this.set({ formErrors: errors });
      return false;
    }
    const body = {
      name: form.name,
      pipeline: form.pipeline,
      model_path: form.model_path,
      ingest_dir: form.ingest_dir,
      alert_threshold: Number(form.alert_threshold),
      notify: parseTargets(form.notify),
    };
    try {
      if (creating) {
        await this.api.createAoi({ aoi_id: form.aoi_id, ...body });
      } else {
        await this.api.patchAoi(form.aoi_id, body);
      }
    } catch (err) {
      if (err instanceof ApiError) {
        const field = err.status === 409 ? "aoi_id" : "form";
        this.set({ formErrors: { [field]: describeDetail(err) } });
        return false;
      }
      this.set({ offline: true });
      return false;
    }
    this.set({ form: null, formMode: null, formErrors: {} });
    await this.refresh();
    return true;
  }

  /** Optimistic threshold edit; rolled back if the API refuses it. */
  async setThreshold(aoiId: string, value: number): Promise<boolean> {
    if (!Number.isFinite(value) || value <= 0) {
      this.set({ formErrors: { alert_threshold: "must be a number greater than 0" } });
      return false;
    }
    const previous = this.state.aois;
    this.set({
      aois: previous.map((a) =>
        a.aoi_id === aoiId ? { ...a, alert_threshold: value } : a,
      ),
      formErrors: {},
    });
    try {
      const updated = await this.api.patchAoi(aoiId, { alert_threshold: value });
      this.set({
        aois: this.state.aois.map((a) => (a.aoi_id === aoiId ? updated : a)),
      });
      return true;
    } catch (err) {
      this.set({
        aois: previous,
        formErrors: { alert_threshold: err instanceof ApiError ? describeDetail(err) : "network error" },
      });
      return false;
    }
  }

  /** Acknowledge one alert; on success it leaves the badge list. */
  async ackAlert(alertId: string): Promise<void> {
    try {
      await this.api.ackAlert(alertId);
      this.set({
        alerts: this.state.alerts.filter((a) => a.alert_id !== alertId),
        toast: null,
      });
    } catch (err) {
      const reason = err instanceof ApiError ? describeDetail(err) : "network error";
      this.set({ toast: `could not acknowledge ${alertId}: ${reason}` });
    }
  }

  dismissToast(): void {
    this.set({ toast: null });
  }
}

export function sortByAcquired(timeline: TimelinePoint[]): void {
  timeline.sort((a, b) =>
    a.acquired_at < b.acquired_at ? -1 : a.acquired_at > b.acquired_at ? 1 : 0,
  );
}

function describeDetail(err: ApiError): string {
  if (typeof err.detail === "string") return err.detail;
  if (Array.isArray(err.detail)) {
    const first = err.detail[0] as { msg?: string } | undefined;
    if (first?.msg) return first.msg;
  }
  return `HTTP ${err.status}`;
}
