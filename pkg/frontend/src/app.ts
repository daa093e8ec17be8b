/** Application state for the three screens (Model / Schedule / Today).
 *
 * The app holds no authoritative state: every view model is a pure function
 * of the latest server responses, so a hard refresh (a brand-new App
 * against the same server) reproduces the identical view.  Mutations go to
 * the server first; the view re-renders from the authoritative snapshot in
 * the response.  A version conflict surfaces as a reload prompt instead of
 * a destructive overwrite. */

import { ApiClient, VersionConflictError } from "./api.js";
import { canonicalStringify } from "./canonical.js";
import { buildGantt, GanttView } from "./gantt.js";
import type {
  ActualEventDoc,
  EstimateDoc,
  MissionResponse,
  ProgressEventDoc,
  TraceDoc,
} from "./types.js";

export interface TodayView {
  gantt: GanttView;
  missionVersion: number;
  modelVersion: number;
  planFeasible: boolean | null;
  conflict: string | null;
}

export interface SparklinePoint {
  index: number;
  objective: number;
  pHat: number;
}

export class App {
  private mission: MissionResponse | null = null;
  private plannedTrace: (TraceDoc & { version: number }) | null = null;
  private lastEstimate: EstimateDoc | null = null;
  highlightProject: string | null = null;
  conflict: string | null = null;

  constructor(readonly client: ApiClient, readonly missionId: string) {}

  /** Authoritative re-render: everything from the server, nothing cached. */
  async refresh(): Promise<TodayView> {
    this.mission = await this.client.getMission(this.missionId);
    if (this.mission.snapshot.state.future_schedule &&
        this.mission.snapshot.state.future_schedule.priority_order.length > 0) {
      this.plannedTrace = await this.client.getMissionTrace(this.missionId);
    } else {
      this.plannedTrace = null;
    }
    return this.view();
  }

  view(): TodayView {
    if (!this.mission) {
      throw new Error("refresh() first");
    }
    return {
      gantt: buildGantt(this.mission.snapshot, this.plannedTrace,
                        this.lastEstimate ? this.lastEstimate.p_hat : null,
                        this.highlightProject),
      missionVersion: this.mission.version,
      modelVersion: this.mission.model_version,
      planFeasible: this.plannedTrace ? this.plannedTrace.success : null,
      conflict: this.conflict,
    };
  }

  /** Serialized view for refresh-equivalence checks. */
  viewFingerprint(): string {
    return canonicalStringify(this.view());
  }

  async recordEvent(event: ActualEventDoc): Promise<TodayView> {
    try {
      this.mission = await this.client.recordEvent(this.missionId, event,
                                                   `evt-${event.activity_id}-${event.kind}-${event.at}`);
      this.conflict = null;
    } catch (err) {
      if (err instanceof VersionConflictError) {
        this.conflict = `mission moved to version ${err.currentVersion}; reload`;
        return this.view();
      }
      throw err;
    }
    return this.refresh();
  }

  async advance(to: number): Promise<TodayView> {
    this.mission = await this.client.advanceClock(this.missionId, to);
    return this.refresh();
  }

  async reoptimize(config: unknown): Promise<TodayView> {
    const out = await this.client.reoptimize(this.missionId, config);
    if (out.status !== "done") {
      this.conflict = `reoptimize ${out.status}`;
      return this.view();
    }
    if (out.result) {
      this.lastEstimate = out.result.estimate;
    }
    return this.refresh();
  }

  setBannerEstimate(estimate: EstimateDoc | null): void {
    this.lastEstimate = estimate;
  }
}

/** Live objective sparkline fed from the resumable progress feed. */
export class ProgressSparkline {
  readonly points: SparklinePoint[] = [];
  private next = 0;

  constructor(private readonly client: ApiClient, readonly problemId: string) {}

  async poll(): Promise<SparklinePoint[]> {
    const out = await this.client.getProgress(this.problemId, this.next);
    for (const ev of out.events) {
      this.points.push(this.toPoint(ev));
    }
    this.next = out.next;
    return [...this.points];
  }

  /** A reconnect resumes from the last seen index without duplicates. */
  resumeToken(): number {
    return this.next;
  }

  private toPoint(ev: ProgressEventDoc): SparklinePoint {
    return {
      index: ev.index,
      objective: ev.best_objective ?? Number.NaN,
      pHat: ev.best_p_hat ?? Number.NaN,
    };
  }
}
