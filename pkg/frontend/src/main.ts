/** Browser entry point: wires the three screens to the service named by
 * the `?service=` query parameter (same origin by default). */

import { ApiClient } from "./api.js";
import { App, ProgressSparkline } from "./app.js";
import { renderBanner, renderGantt, renderSparkline } from "./dom.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("service") ?? "";
  const missionId = params.get("mission") ?? "mission";
  const client = new ApiClient((url, init) => fetch(url, init), base);
  const app = new App(client, missionId);

  const banner = document.getElementById("banner");
  const gantt = document.getElementById("gantt");
  const spark = document.getElementById("sparkline");
  const reoptButton = document.getElementById("reoptimize");
  const refreshButton = document.getElementById("refresh");

  async function paint(): Promise<void> {
    const view = await app.refresh();
    if (banner) renderBanner(view, banner);
    if (gantt) renderGantt(view.gantt, gantt);
  }

  reoptButton?.addEventListener("click", async () => {
    const view = await app.reoptimize({
      kpi_weights: { w_success: 1 },
      n_eval_scenarios: 300,
      max_iterations: 300,
      restart_count: 2,
    });
    if (banner) renderBanner(view, banner);
    if (gantt) renderGantt(view.gantt, gantt);
  });
  refreshButton?.addEventListener("click", () => void paint());

  const problemId = params.get("problem");
  if (problemId && spark) {
    const sparkline = new ProgressSparkline(client, problemId);
    setInterval(async () => {
      renderSparkline(await sparkline.poll(), spark);
    }, 1000);
  }

  await paint();
}

void boot();
