import { ApiClient } from "./api.js";
import { DashboardStore } from "./store.js";
import type { AoiForm } from "./types.js";
import { renderApp } from "./views.js";

/** Browser entry point: wire the store to the document. */

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (root === null) throw new Error("missing #app element");
  const api = await ApiClient.fromConfig((input, init) => fetch(input, init));
  const store = new DashboardStore(api);

  store.subscribe(() => {
    root.innerHTML = renderApp(store.getState());
  });

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest("[data-action]");
    if (!(target instanceof HTMLElement)) return;
    const action = target.dataset.action;
    if (action === "open") {
      event.preventDefault();
      void store.openAoi(target.closest("tr")?.dataset.aoi ?? "");
    } else if (action === "back") {
      event.preventDefault();
      store.openList();
    } else if (action === "create") {
      store.beginCreate();
    } else if (action === "edit") {
      const aoi = store.getState().aois.find((a) => a.aoi_id === target.dataset.aoi);
      if (aoi) store.beginEdit(aoi);
    } else if (action === "ack") {
      void store.ackAlert(target.dataset.alert ?? "");
    } else if (action === "toggle-heatmap") {
      store.toggleHeatmap();
    } else if (action === "retry") {
      void store.refresh();
    } else if (action === "dismiss-toast") {
      store.dismissToast();
    }
  });

  root.addEventListener("input", (event) => {
    const input = event.target;
    if (input instanceof HTMLInputElement || input instanceof HTMLSelectElement) {
      if (input.name) store.updateForm(input.name as keyof AoiForm, input.value);
    }
  });

  root.addEventListener("submit", (event) => {
    event.preventDefault();
    void store.submitForm();
  });

  await store.refresh();
  const match = window.location.hash.match(/^#\/aois\/(.+)$/);
  if (match !== null) {
    await store.openAoi(decodeURIComponent(match[1]));
  } else {
    store.openList();
  }
}

void boot();
