import { describe, expect, it } from "vitest";

import { buildGantt, futureRegion, pastFutureSplitHolds, pastRegion } from "../src/gantt.js";
import type { MissionFixture } from "./fakeserver.js";
import { loadFixture } from "./fakeserver.js";

const before = loadFixture<MissionFixture>("sol6_before.json");
const after = loadFixture<MissionFixture>("sol6_after.json");

describe("gantt view", () => {
  it("splits bars hard at the now marker", () => {
    const view = buildGantt(before.snapshot, before.trace, before.p_hat);
    expect(view.nowMinute).toBe(before.snapshot.state.now);
    expect(pastFutureSplitHolds(view)).toBe(true);
    expect(pastRegion(view).length).toBeGreaterThan(0);
  });

  it("past bars come only from recorded actual events", () => {
    const view = buildGantt(before.snapshot, before.trace, before.p_hat);
    const recordedStarts = new Map(
      before.snapshot.state.history
        .filter((e) => e.kind === "started")
        .map((e) => [e.activity_id, e.at]));
    for (const bar of view.bars) {
      if (bar.kind === "past" || bar.kind === "in_progress") {
        expect(recordedStarts.get(bar.activityId)).toBe(bar.start);
      }
    }
  });

  it("future bars come only from the planned future schedule", () => {
    const view = buildGantt(before.snapshot, before.trace, before.p_hat);
    const futureIds = new Set(before.snapshot.state.future_schedule!.priority_order);
    for (const bar of futureRegion(view)) {
      expect(futureIds.has(bar.activityId)).toBe(true);
      expect(bar.start).toBeGreaterThanOrEqual(view.nowMinute);
    }
  });

  it("cancelled activities render struck through", () => {
    const view = buildGantt(before.snapshot, before.trace, before.p_hat);
    const cancelledIds = Object.keys(before.snapshot.state.cancelled);
    expect(cancelledIds.length).toBeGreaterThan(0);
    const struck = view.bars.filter((b) => b.kind === "cancelled");
    expect(struck.map((b) => b.activityId).sort()).toEqual(cancelledIds.sort());
    const futureIds = new Set(futureRegion(view).map((b) => b.activityId));
    for (const id of cancelledIds) {
      expect(futureIds.has(id)).toBe(false);
    }
  });

  it("the banner carries the server probability verbatim", () => {
    const view = buildGantt(after.snapshot, after.trace, after.p_hat);
    expect(view.banner).toBe(after.p_hat);
    const none = buildGantt(after.snapshot, after.trace, null);
    expect(none.banner).toBeNull();
  });

  it("project highlighting marks exactly that project's bars", () => {
    const projects = before.snapshot.projects.map((p) => p.id);
    const target = projects[0]!;
    const view = buildGantt(before.snapshot, before.trace, before.p_hat, target);
    const highlighted = view.bars.filter((b) => b.highlighted);
    expect(highlighted.length).toBeGreaterThan(0);
    for (const bar of highlighted) {
      expect(bar.projectId).toBe(target);
    }
    for (const bar of view.bars.filter((b) => !b.highlighted)) {
      expect(bar.projectId === target).toBe(false);
    }
  });

  it("rows cover crew, equipment and the unassigned lane", () => {
    const view = buildGantt(before.snapshot, before.trace, before.p_hat);
    expect(view.rows).toContain("crew0");
    expect(view.rows).toContain("laf");
    expect(view.rows).toContain("unassigned");
    for (const bar of view.bars) {
      expect(view.rows).toContain(bar.row);
    }
  });
});
