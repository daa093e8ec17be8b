/** Graphical model editor state: activity cards and constraint arrows over
 * a canvas.  Card positions are presentation-only -- they never enter the
 * model document.  The editor tracks the server version it was loaded from
 * and a dirty flag; the produced document is exactly what the server
 * stores, so editor -> upload -> fetch round-trips structurally. */

import { deepCopy } from "./canonical.js";
import type {
  ActivityDoc,
  CalendarDoc,
  ConstraintDoc,
  DurationDoc,
  ModelDoc,
  ProjectDoc,
  ResourceDoc,
} from "./types.js";

export interface CardLayout {
  x: number;
  y: number;
}

export interface TripleInput {
  min: number;
  mode: number;
  max: number;
  lam?: number;
}

export class TripleOrderError extends Error {}

function tripleToDuration(t: TripleInput): DurationDoc {
  if (!(0 <= t.min && t.min <= t.mode && t.mode <= t.max)) {
    throw new TripleOrderError(
      `duration triple must satisfy 0 <= min <= mode <= max, got ` +
      `${t.min}/${t.mode}/${t.max}`);
  }
  return { kind: "modified_pert", min: t.min, mode: t.mode, max: t.max, lam: t.lam ?? 4.0 };
}

export class ModelEditor {
  readonly layout = new Map<string, CardLayout>();
  private activities: ActivityDoc[] = [];
  private constraints: ConstraintDoc[] = [];
  private constraintSeq = 0;
  serverVersion: number | null = null;
  dirty = false;

  constructor(
    public projectId: string,
    public projectName: string,
    public calendar: CalendarDoc,
    public resources: ResourceDoc[] = [],
    public priorityWeight = 1.0,
  ) {}

  private touch(): void {
    this.dirty = true;
  }

  activityIds(): string[] {
    return this.activities.map((a) => a.id);
  }

  getActivity(id: string): ActivityDoc | undefined {
    return this.activities.find((a) => a.id === id);
  }

  addActivity(id: string, duration: TripleInput | number,
              opts: Partial<Omit<ActivityDoc, "id" | "duration">> = {},
              at: CardLayout = { x: 0, y: 0 }): void {
    if (this.getActivity(id)) {
      throw new Error(`activity ${id} already exists`);
    }
    const dur: DurationDoc = typeof duration === "number" ? duration : tripleToDuration(duration);
    this.activities.push({ id, duration: dur, ...opts });
    this.layout.set(id, { ...at });
    this.touch();
  }

  removeActivity(id: string): void {
    this.activities = this.activities.filter((a) => a.id !== id);
    this.constraints = this.constraints.filter(
      (c) => c.from.activity !== id && c.to.activity !== id);
    this.layout.delete(id);
    this.touch();
  }

  /** The min/mode/max editor: rejects a disordered triple client-side
   * before anything reaches the server. */
  setTriple(id: string, triple: TripleInput): void {
    const act = this.getActivity(id);
    if (!act) {
      throw new Error(`unknown activity ${id}`);
    }
    act.duration = tripleToDuration(triple);
    this.touch();
  }

  /** Draw an arrow: a precedence constraint (end -> start) by default. */
  connect(fromId: string, toId: string, opts: {
    minDelay?: DurationDoc;
    maxDelay?: number;
    sameSol?: boolean;
    fromAnchor?: "start" | "end";
    toAnchor?: "start" | "end";
  } = {}): string {
    for (const id of [fromId, toId]) {
      if (!this.getActivity(id)) {
        throw new Error(`unknown activity ${id}`);
      }
    }
    const cid = `c${String(this.constraintSeq++).padStart(3, "0")}`;
    const doc: ConstraintDoc = {
      id: cid,
      from: { activity: fromId, anchor: opts.fromAnchor ?? "end" },
      to: { activity: toId, anchor: opts.toAnchor ?? "start" },
      min_delay: opts.minDelay ?? 0,
    };
    if (opts.maxDelay !== undefined) {
      doc.max_delay = opts.maxDelay;
    }
    if (opts.sameSol) {
      doc.same_sol = true;
    }
    this.constraints.push(doc);
    this.touch();
    return cid;
  }

  disconnect(constraintId: string): void {
    this.constraints = this.constraints.filter((c) => c.id !== constraintId);
    this.touch();
  }

  /** Presentation only: moving a card never marks the model dirty. */
  moveCard(id: string, x: number, y: number): void {
    const pos = this.layout.get(id);
    if (pos) {
      pos.x = x;
      pos.y = y;
    }
  }

  edges(): ConstraintDoc[] {
    return deepCopy(this.constraints);
  }

  toProjectDoc(): ProjectDoc {
    return deepCopy({
      id: this.projectId,
      name: this.projectName,
      priority_weight: this.priorityWeight,
      activities: this.activities,
      constraints: this.constraints,
    });
  }

  toModelDoc(): ModelDoc {
    return deepCopy({
      format_version: 1,
      calendar: this.calendar,
      resources: this.resources,
      projects: [this.toProjectDoc()],
    });
  }

  /** Populate the editor from a fetched document (single-project models). */
  loadModelDoc(doc: ModelDoc, serverVersion: number): void {
    const project = doc.projects[0];
    if (!project) {
      throw new Error("document has no projects");
    }
    this.projectId = project.id;
    this.projectName = project.name;
    this.priorityWeight = project.priority_weight;
    this.calendar = deepCopy(doc.calendar);
    this.resources = deepCopy(doc.resources);
    this.activities = deepCopy(project.activities);
    this.constraints = deepCopy(project.constraints);
    this.constraintSeq = project.constraints.length;
    for (const a of this.activities) {
      if (!this.layout.has(a.id)) {
        this.layout.set(a.id, { x: 0, y: 0 });
      }
    }
    this.serverVersion = serverVersion;
    this.dirty = false;
  }

  markSaved(serverVersion: number): void {
    this.serverVersion = serverVersion;
    this.dirty = false;
  }
}
