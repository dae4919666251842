import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { ApiClient } from "../src/api.js";
import type { FetchLike } from "../src/api.js";
import { DashboardStore } from "../src/store.js";
import type { DashboardState } from "../src/store.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

/** Load a recorded API response. Parsed fresh each call so tests can mutate. */
export function fixture<T = unknown>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf-8")) as T;
}

export interface RecordedCall {
  method: string;
  path: string;
  body: unknown;
}

interface CannedResponse {
  status: number;
  json: unknown;
}

/**
 * Fetch stand-in backed by canned responses, keyed by "METHOD path".
 * Registering the same key twice serves the responses in order, with the
 * last one repeating. Unrouted requests reject the way a dead socket
 * would, so offline handling is testable with the same helper.
 */
export class FakeFetch {
  readonly calls: RecordedCall[] = [];
  private routes = new Map<string, CannedResponse[]>();

  on(method: string, path: string, json: unknown, status = 200): this {
    const key = `${method} ${path}`;
    const queue = this.routes.get(key) ?? [];
    queue.push({ status, json });
    this.routes.set(key, queue);
    return this;
  }

  get fetch(): FetchLike {
    return async (input, init) => {
      const method = init?.method ?? "GET";
      this.calls.push({
        method,
        path: input,
        body: typeof init?.body === "string" ? JSON.parse(init.body) : undefined,
      });
      const queue = this.routes.get(`${method} ${input}`);
      if (queue === undefined || queue.length === 0) {
        throw new TypeError(`fetch failed: no route for ${method} ${input}`);
      }
      const canned = queue.length > 1 ? queue.shift()! : queue[0];
      const body = canned.json === undefined ? null : JSON.stringify(canned.json);
      return new Response(body, {
        status: canned.status,
        headers: { "Content-Type": "application/json" },
      });
    };
  }

  sent(method: string, path: string): RecordedCall[] {
    return this.calls.filter((c) => c.method === method && c.path === path);
  }
}

export function makeStore(fake: FakeFetch): DashboardStore {
  return new DashboardStore(new ApiClient(fake.fetch));
}

/** Full state object with every field defaulted, for renderer tests. */
export function baseState(patch: Partial<DashboardState> = {}): DashboardState {
  return {
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
    ...patch,
  };
}
