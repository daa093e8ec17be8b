/** Thin DOM layer: renders view models produced by the pure modules. */

import type { GanttView } from "./gantt.js";
import type { TodayView } from "./app.js";
import type { ModelEditor } from "./editor.js";

const BAR_COLORS: Record<string, string> = {
  past: "#7a8ca3",
  in_progress: "#2d7ff9",
  future: "#41a85f",
  cancelled: "#b44",
};

export function renderBanner(view: TodayView, el: HTMLElement): void {
  const p = view.gantt.banner;
  el.textContent = p === null
    ? "success probability: --"
    : `success probability: ${(p * 100).toFixed(1)}%`;
  el.dataset["raw"] = p === null ? "" : String(p);
}

export function renderGantt(view: GanttView, root: HTMLElement): void {
  root.replaceChildren();
  const scale = root.clientWidth > 0 ? root.clientWidth / view.horizonMinutes : 0.05;
  for (const row of view.rows) {
    const rowEl = document.createElement("div");
    rowEl.className = "gantt-row";
    rowEl.dataset["row"] = row;
    const label = document.createElement("span");
    label.className = "gantt-row-label";
    label.textContent = row;
    rowEl.appendChild(label);
    for (const bar of view.bars.filter((b) => b.row === row)) {
      const el = document.createElement("div");
      el.className = `gantt-bar gantt-${bar.kind}` + (bar.highlighted ? " highlighted" : "");
      el.dataset["activity"] = bar.activityId;
      el.style.position = "absolute";
      el.style.left = `${bar.start * scale}px`;
      el.style.width = `${Math.max(2, (bar.end - bar.start) * scale)}px`;
      el.style.background = BAR_COLORS[bar.kind] ?? "#999";
      if (bar.kind === "cancelled") {
        el.style.textDecoration = "line-through";
      }
      el.title = `${bar.activityId} [${bar.start}, ${bar.end}]`;
      rowEl.appendChild(el);
    }
    root.appendChild(rowEl);
  }
  const marker = document.createElement("div");
  marker.className = "gantt-now";
  marker.style.position = "absolute";
  marker.style.left = `${view.nowMinute * scale}px`;
  marker.title = `now: minute ${view.nowMinute}`;
  root.appendChild(marker);
}

export function renderEditor(editor: ModelEditor, root: HTMLElement,
                             onChanged: () => void): void {
  root.replaceChildren();
  for (const id of editor.activityIds()) {
    const act = editor.getActivity(id)!;
    const pos = editor.layout.get(id) ?? { x: 0, y: 0 };
    const card = document.createElement("div");
    card.className = "activity-card";
    card.dataset["activity"] = id;
    card.style.position = "absolute";
    card.style.left = `${pos.x}px`;
    card.style.top = `${pos.y}px`;

    const title = document.createElement("strong");
    title.textContent = id;
    card.appendChild(title);

    const d = act.duration;
    if (typeof d === "object" && d.kind === "modified_pert") {
      const triple = document.createElement("div");
      triple.className = "triple-editor";
      for (const field of ["min", "mode", "max"] as const) {
        const input = document.createElement("input");
        input.type = "number";
        input.value = String(d[field]);
        input.dataset["field"] = field;
        input.addEventListener("change", () => {
          const next = { min: d.min, mode: d.mode, max: d.max, lam: d.lam };
          next[field] = Number(input.value);
          try {
            editor.setTriple(id, next);
            input.setCustomValidity("");
            onChanged();
          } catch {
            input.setCustomValidity("min <= mode <= max required");
            input.reportValidity();
            input.value = String(d[field]); // inline rejection, value restored
          }
        });
        triple.appendChild(input);
      }
      card.appendChild(triple);
    }
    root.appendChild(card);
  }
  for (const edge of editor.edges()) {
    const arrow = document.createElement("div");
    arrow.className = "constraint-arrow";
    arrow.dataset["constraint"] = edge.id;
    const delay = typeof edge.min_delay === "number" ? edge.min_delay : "~";
    arrow.textContent = `${edge.from.activity} -> ${edge.to.activity}` +
      (delay ? ` (min ${delay}m)` : "") + (edge.same_sol ? " [same sol]" : "");
    root.appendChild(arrow);
  }
}

export function renderSparkline(points: { objective: number }[], el: HTMLElement): void {
  const values = points.map((p) => p.objective).filter((v) => Number.isFinite(v));
  if (values.length === 0) {
    el.textContent = "";
    return;
  }
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const glyphs = " .:-=+*#%@";
  el.textContent = values
    .map((v) => glyphs[hi === lo ? 0 : Math.round((hi - v) / (hi - lo) * (glyphs.length - 1))])
    .join("");
}
