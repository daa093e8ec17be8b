import { describe, expect, it } from "vitest";

import { ApiClient, VersionConflictError } from "../src/api.js";
import { docEqual } from "../src/canonical.js";
import { ModelEditor, TripleOrderError } from "../src/editor.js";
import type { ModelDoc } from "../src/types.js";
import { FakeServer, loadFixture } from "./fakeserver.js";

const SURVEY_CALENDAR = {
  horizon_sols: 6,
  minutes_per_sol: 1440,
  work_windows: [[540, 720], [810, 1080]] as [number, number][],
};

/** Rebuild the soil-survey project exactly as a user would draw it. */
function buildSurveyEditor(): ModelEditor {
  const editor = new ModelEditor("survey", "Soil dielectric 3D map", SURVEY_CALENDAR, []);
  editor.addActivity("zone_drone_flyby", { min: 20, mode: 30, max: 50 }, {}, { x: 40, y: 60 });
  editor.addActivity("zone_delimitation", { min: 30, mode: 45, max: 90 }, {}, { x: 220, y: 60 });
  editor.addActivity("measure_radar", { min: 40, mode: 60, max: 120 }, {}, { x: 400, y: 20 });
  editor.addActivity("measure_drone", { min: 30, mode: 40, max: 80 }, {}, { x: 400, y: 110 });
  editor.connect("zone_drone_flyby", "zone_delimitation");
  editor.connect("zone_delimitation", "measure_radar");
  editor.connect("zone_delimitation", "measure_drone");
  return editor;
}

describe("model editor", () => {
  it("rebuilding the survey graph matches the checked-in fixture", () => {
    const fixture = loadFixture<ModelDoc>("survey_model.json");
    const doc = buildSurveyEditor().toModelDoc();
    expect(docEqual(doc, fixture)).toBe(true);
  });

  it("uploading the drawn model round-trips byte-equivalently through the server", async () => {
    const server = new FakeServer();
    const client = new ApiClient(server.fetch);
    const editor = buildSurveyEditor();
    const put = await client.putModel(editor.toModelDoc(), "survey");
    editor.markSaved(put.version);
    expect(editor.dirty).toBe(false);
    const fetched = await client.getModel("survey");
    expect(docEqual(fetched.model, loadFixture("survey_model.json"))).toBe(true);
    // drawing an arrow shows up in the fetched model
    editor.addActivity("bonus_scan", { min: 10, mode: 15, max: 30 });
    editor.connect("measure_radar", "bonus_scan");
    const again = await client.putModel(editor.toModelDoc(), "survey", put.version);
    editor.markSaved(again.version);
    const fetched2 = await client.getModel("survey");
    expect(fetched2.version).toBe(2);
    const constraints = fetched2.model.projects[0]!.constraints;
    expect(constraints.some((c) => c.from.activity === "measure_radar"
      && c.to.activity === "bonus_scan")).toBe(true);
  });

  it("rejects a disordered min/mode/max triple inline", () => {
    const editor = buildSurveyEditor();
    expect(() => editor.setTriple("measure_radar", { min: 50, mode: 40, max: 120 }))
      .toThrow(TripleOrderError);
    expect(() => editor.setTriple("measure_radar", { min: 40, mode: 130, max: 120 }))
      .toThrow(TripleOrderError);
    // the rejected edit leaves the card untouched
    const card = editor.getActivity("measure_radar")!;
    expect(card.duration).toEqual({ kind: "modified_pert", min: 40, mode: 60, max: 120, lam: 4 });
    editor.setTriple("measure_radar", { min: 40, mode: 70, max: 120 });
    expect((editor.getActivity("measure_radar")!.duration as { mode: number }).mode).toBe(70);
  });

  it("layout is presentation-only and never alters the document", () => {
    const editor = buildSurveyEditor();
    const before = editor.toModelDoc();
    editor.markSaved(1);
    editor.moveCard("measure_radar", 999, 999);
    expect(editor.dirty).toBe(false);
    expect(docEqual(editor.toModelDoc(), before)).toBe(true);
  });

  it("stale uploads surface a version conflict with the current version", async () => {
    const server = new FakeServer();
    const client = new ApiClient(server.fetch);
    const editor = buildSurveyEditor();
    await client.putModel(editor.toModelDoc(), "survey");
    await client.putModel(editor.toModelDoc(), "survey", 1);
    await expect(client.putModel(editor.toModelDoc(), "survey", 1))
      .rejects.toSatisfy((e: unknown) =>
        e instanceof VersionConflictError && e.currentVersion === 2);
  });

  it("loadModelDoc round-trips the document", () => {
    const fixture = loadFixture<ModelDoc>("survey_model.json");
    const editor = new ModelEditor("x", "", SURVEY_CALENDAR);
    editor.loadModelDoc(fixture, 3);
    expect(editor.serverVersion).toBe(3);
    expect(editor.dirty).toBe(false);
    expect(docEqual(editor.toModelDoc(), fixture)).toBe(true);
    expect(editor.activityIds()).toEqual([
      "zone_drone_flyby", "zone_delimitation", "measure_radar", "measure_drone"]);
  });

  it("removing an activity drops its arrows", () => {
    const editor = buildSurveyEditor();
    editor.removeActivity("zone_delimitation");
    expect(editor.edges()).toHaveLength(0);
    expect(editor.activityIds()).toHaveLength(3);
  });
});
