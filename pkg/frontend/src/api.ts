import type {
  Alert,
  Aoi,
  LatestPayload,
  PollSummary,
  RuntimeConfig,
  TimelinePoint,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : `HTTP ${status}`);
    this.name = "ApiError";
  }
}

/** Typed client for the monitor API. All state lives server-side. */
export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike,
    readonly base = "",
  ) {}

  /** Resolve the API base from the service's runtime config endpoint. */
  static async fromConfig(fetchFn: FetchLike): Promise<ApiClient> {
    const resp = await fetchFn("/config.json");
    if (!resp.ok) throw new ApiError(resp.status, "config.json unavailable");
    const config = (await resp.json()) as RuntimeConfig;
    return new ApiClient(fetchFn, config.api_base);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let detail: unknown = null;
      try {
        detail = ((await resp.json()) as { detail?: unknown }).detail ?? null;
      } catch {
        // non-JSON error body; status alone has to do
      }
      throw new ApiError(resp.status, detail);
    }
    if (resp.status === 204) return undefined as T;
    return (await resp.json()) as T;
  }

  listAois(): Promise<Aoi[]> {
    return this.request("GET", "/api/aois");
  }

  createAoi(body: Omit<Aoi, "alert_threshold" | "notify"> & Partial<Aoi>): Promise<Aoi> {
    return this.request("POST", "/api/aois", body);
  }

  patchAoi(aoiId: string, patch: Partial<Omit<Aoi, "aoi_id">>): Promise<Aoi> {
    return this.request("PATCH", `/api/aois/${encodeURIComponent(aoiId)}`, patch);
  }

  deleteAoi(aoiId: string): Promise<void> {
    return this.request("DELETE", `/api/aois/${encodeURIComponent(aoiId)}`);
  }

  timeline(aoiId: string): Promise<TimelinePoint[]> {
    return this.request("GET", `/api/aois/${encodeURIComponent(aoiId)}/timeline`);
  }

  latest(aoiId: string): Promise<LatestPayload> {
    return this.request("GET", `/api/aois/${encodeURIComponent(aoiId)}/latest`);
  }

  overlayUrl(aoiId: string): string {
    return `${this.base}/api/aois/${encodeURIComponent(aoiId)}/latest/overlay.png`;
  }

  heatmapUrl(aoiId: string): string {
    return `${this.base}/api/aois/${encodeURIComponent(aoiId)}/latest/heatmap.png`;
  }

  alerts(acknowledged?: boolean): Promise<Alert[]> {
    const query = acknowledged === undefined ? "" : `?acknowledged=${acknowledged}`;
    return this.request("GET", `/api/alerts${query}`);
  }

  ackAlert(alertId: string): Promise<Alert> {
    return this.request("POST", `/api/alerts/${encodeURIComponent(alertId)}/ack`);
  }

  poll(): Promise<PollSummary> {
    return this.request("POST", "/api/poll");
  }
}
