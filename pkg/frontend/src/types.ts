/** Payload shapes of the /v1 service (the canonical document schema). */

export type DurationDoc =
  | number
  | { kind: "deterministic"; value: number; min_clip?: number }
  | { kind: "modified_pert"; min: number; mode: number; max: number; lam: number; min_clip?: number }
  | { kind: "discrete"; values: [number, number][]; min_clip?: number };

export interface WindowDoc {
  kind: "absolute" | "daily";
  start: number;
  end: number;
}

export interface ActivityDoc {
  id: string;
  duration: DurationDoc;
  requirements?: [string, number][];
  eligible_crew?: string[];
  crew_needed?: number;
  window?: WindowDoc | null;
  same_sol_required?: boolean;
  cost?: number;
  quality?: number;
}

export interface EventRefDoc {
  activity: string;
  anchor: "start" | "end";
}

export interface ConstraintDoc {
  id: string;
  from: EventRefDoc;
  to: EventRefDoc;
  min_delay: DurationDoc;
  max_delay?: number;
  same_sol?: boolean;
  cross_project?: boolean;
}

export interface ProjectDoc {
  id: string;
  name: string;
  priority_weight: number;
  activities: ActivityDoc[];
  constraints: ConstraintDoc[];
}

export interface CalendarDoc {
  horizon_sols: number;
  minutes_per_sol: number;
  work_windows: [number, number][];
}

export interface ResourceDoc {
  id: string;
  kind: "crew_member" | "equipment";
  capacity: number;
}

export interface ModelDoc {
  format_version: number;
  calendar: CalendarDoc;
  resources: ResourceDoc[];
  projects: ProjectDoc[];
}

export interface ScheduleDoc {
  priority_order: string[];
  assignments?: Record<string, string[]>;
  pinned_starts?: Record<string, number>;
}

export interface ActualEventDoc {
  activity_id: string;
  kind: "started" | "completed" | "failed" | "cancelled";
  at: number;
  note?: string;
}

export interface MissionStateDoc {
  mission_id: string;
  now: number;
  version: number;
  model_version: number;
  history: ActualEventDoc[];
  cancelled: Record<string, string>;
  at_risk: string[];
  actual_assignments: Record<string, string[]>;
  future_schedule: ScheduleDoc | null;
}

export type SnapshotDoc = ModelDoc & { state: MissionStateDoc };

export interface TraceEntryDoc {
  start: number;
  end: number;
}

export interface TraceDoc {
  entries: Record<string, TraceEntryDoc | null>;
  success: boolean;
  failure_reason: string | null;
  violations: { element_id: string; category: string; message: string }[];
  first_violation_minute: number | null;
}

export interface KpiDoc {
  mean: number;
  std_error: number;
}

export interface EstimateDoc {
  p_hat: number;
  p_fail: number;
  n: number;
  std_error: number;
  ci95: [number, number];
  kpis: Record<string, KpiDoc>;
  seed: number;
}

export interface MissionResponse {
  mission_id: string;
  version: number;
  model_version: number;
  snapshot: SnapshotDoc;
}

export interface ProgressEventDoc {
  index: number;
  agent?: string;
  iterations?: number;
  best_objective?: number;
  best_p_hat?: number;
}

export interface ApiError {
  error: { message: string; fields?: string[]; current_version?: number };
}
