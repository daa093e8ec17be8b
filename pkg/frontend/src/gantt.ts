/** Gantt view model: rows per crew member (plus equipment and an
 * unassigned row), bars split hard at the now-marker -- everything left of
 * it derives from recorded actual events, everything right of it from the
 * planned dispatch of the future schedule.  The success-probability banner
 * carries the server's number verbatim. */

import type { SnapshotDoc, TraceDoc } from "./types.js";

export type BarKind = "past" | "in_progress" | "future" | "cancelled";

export interface GanttBar {
  activityId: string;
  projectId: string;
  row: string;
  start: number;
  end: number;
  kind: BarKind;
  highlighted: boolean;
}

export interface GanttView {
  rows: string[];
  bars: GanttBar[];
  nowMinute: number;
  horizonMinutes: number;
  banner: number | null; // server-reported success probability, verbatim
  atRisk: string[];
}

function projectOf(activityId: string): string {
  const idx = activityId.indexOf(":");
  return idx < 0 ? "" : activityId.slice(0, idx);
}

export function buildGantt(snapshot: SnapshotDoc, plannedTrace: TraceDoc | null,
                           pHat: number | null,
                           highlightProject: string | null = null): GanttView {
  const state = snapshot.state;
  const now = state.now;
  const crewRows = snapshot.resources
    .filter((r) => r.kind === "crew_member")
    .map((r) => r.id);
  const equipmentRows = snapshot.resources
    .filter((r) => r.kind === "equipment")
    .map((r) => r.id);
  const rows = [...crewRows, ...equipmentRows, "unassigned"];

  const nominalDuration = new Map<string, number>();
  const requirementRow = new Map<string, string>();
  for (const project of snapshot.projects) {
    for (const a of project.activities) {
      const aid = a.id.includes(":") ? a.id : `${project.id}:${a.id}`;
      const d = a.duration;
      const nominal = typeof d === "number" ? d
        : d.kind === "deterministic" ? d.value
        : d.kind === "modified_pert" ? d.mode
        : d.values.reduce((best, vp) => (vp[1] > best[1] || (vp[1] === best[1] && vp[0] < best[0]) ? vp : best))[0];
      nominalDuration.set(aid, nominal);
      const req = (a.requirements ?? []).find(([rid]) => equipmentRows.includes(rid));
      if (req) {
        requirementRow.set(aid, req[0]);
      }
    }
  }

  const rowOf = (aid: string, assigned: string[] | undefined): string => {
    const crew = assigned?.[0];
    if (crew && rows.includes(crew)) {
      return crew;
    }
    return requirementRow.get(aid) ?? "unassigned";
  };

  const bars: GanttBar[] = [];
  const started = new Map<string, number>();
  const finished = new Map<string, number>();
  for (const ev of state.history) {
    if (ev.kind === "started") {
      started.set(ev.activity_id, ev.at);
    } else if (ev.kind === "completed" || ev.kind === "failed") {
      finished.set(ev.activity_id, ev.at);
    }
  }

  // past region: recorded actuals only
  for (const [aid, s] of started) {
    const e = finished.get(aid);
    bars.push({
      activityId: aid,
      projectId: projectOf(aid),
      row: rowOf(aid, state.actual_assignments[aid]),
      start: s,
      end: e ?? now,
      kind: e === undefined ? "in_progress" : "past",
      highlighted: highlightProject !== null && projectOf(aid) === highlightProject,
    });
  }

  // cancelled activities render struck through at their cancellation moment
  for (const ev of state.history) {
    if (ev.kind !== "cancelled") {
      continue;
    }
    const aid = ev.activity_id;
    bars.push({
      activityId: aid,
      projectId: projectOf(aid),
      row: rowOf(aid, state.actual_assignments[aid]),
      start: ev.at,
      end: ev.at + (nominalDuration.get(aid) ?? 0),
      kind: "cancelled",
      highlighted: highlightProject !== null && projectOf(aid) === highlightProject,
    });
  }

  // future region: planned dispatch of the not-yet-started schedule only
  const futureIds = new Set(state.future_schedule?.priority_order ?? []);
  if (plannedTrace) {
    for (const [aid, entry] of Object.entries(plannedTrace.entries)) {
      if (!entry || !futureIds.has(aid)) {
        continue;
      }
      if (entry.start < now) {
        continue; // never paint plan output into the past region
      }
      bars.push({
        activityId: aid,
        projectId: projectOf(aid),
        row: rowOf(aid, state.future_schedule?.assignments?.[aid]),
        start: entry.start,
        end: entry.end,
        kind: "future",
        highlighted: highlightProject !== null && projectOf(aid) === highlightProject,
      });
    }
  }

  bars.sort((a, b) => a.start - b.start || a.activityId.localeCompare(b.activityId));
  return {
    rows,
    bars,
    nowMinute: now,
    horizonMinutes: snapshot.calendar.horizon_sols * snapshot.calendar.minutes_per_sol,
    banner: pHat,
    atRisk: [...state.at_risk],
  };
}

/** The defining invariant of the display: bars left of the now-marker come
 * only from actual events, bars right of it only from the planned future. */
export function pastFutureSplitHolds(view: GanttView): boolean {
  for (const bar of view.bars) {
    if (bar.kind === "future" && bar.start < view.nowMinute) {
      return false;
    }
    if ((bar.kind === "past" || bar.kind === "in_progress") && bar.start > view.nowMinute) {
      return false;
    }
    if (bar.kind === "past" && bar.end > view.nowMinute) {
      return false;
    }
  }
  return true;
}

export function pastRegion(view: GanttView): GanttBar[] {
  return view.bars.filter((b) => b.kind !== "future");
}

export function futureRegion(view: GanttView): GanttBar[] {
  return view.bars.filter((b) => b.kind === "future");
}
