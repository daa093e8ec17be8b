/** Typed client for the /v1 service.  The fetch implementation is injected
 * so tests can run against an in-memory fake; every response's version is
 * surfaced to the caller for staleness detection. */

import type {
  ActualEventDoc,
  ApiError,
  EstimateDoc,
  MissionResponse,
  ModelDoc,
  ProgressEventDoc,
  ScheduleDoc,
  TraceDoc,
} from "./types.js";

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ status: number; json(): Promise<unknown> }>;

export class VersionConflictError extends Error {
  constructor(message: string, readonly currentVersion: number) {
    super(message);
  }
}

export class ApiRequestError extends Error {
  constructor(message: string, readonly status: number, readonly fields?: string[]) {
    super(message);
  }
}

async function unwrap<T>(resp: { status: number; json(): Promise<unknown> }): Promise<T> {
  const body = (await resp.json()) as T & Partial<ApiError> & { detail?: ApiError };
  if (resp.status === 409) {
    const err = (body.error ?? body.detail?.error)!;
    throw new VersionConflictError(err.message, err.current_version ?? -1);
  }
  if (resp.status >= 400) {
    const err = body.error ?? body.detail?.error;
    throw new ApiRequestError(err?.message ?? `HTTP ${resp.status}`, resp.status, err?.fields);
  }
  return body as T;
}

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike,
    readonly baseUrl: string = "",
  ) {}

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => unwrap<T>(r));
  }

  private get<T>(path: string): Promise<T> {
    return this.fetchFn(this.baseUrl + path).then((r) => unwrap<T>(r));
  }

  putModel(model: ModelDoc, modelId: string, expectedVersion?: number,
           idempotencyKey?: string): Promise<{ model_id: string; version: number }> {
    return this.post("/v1/models", {
      model, model_id: modelId,
      ...(expectedVersion !== undefined ? { expected_version: expectedVersion } : {}),
      ...(idempotencyKey ? { idempotency_key: idempotencyKey } : {}),
    });
  }

  getModel(modelId: string): Promise<{ model_id: string; version: number; model: ModelDoc }> {
    return this.get(`/v1/models/${modelId}`);
  }

  createMission(missionId: string, modelId: string,
                schedule?: ScheduleDoc): Promise<MissionResponse> {
    return this.post("/v1/missions", {
      mission_id: missionId, model_id: modelId,
      ...(schedule ? { schedule } : {}),
    });
  }

  getMission(missionId: string): Promise<MissionResponse> {
    return this.get(`/v1/missions/${missionId}`);
  }

  getMissionTrace(missionId: string): Promise<TraceDoc & { version: number }> {
    return this.get(`/v1/missions/${missionId}/trace`);
  }

  recordEvent(missionId: string, event: ActualEventDoc,
              idempotencyKey?: string): Promise<MissionResponse> {
    return this.post(`/v1/missions/${missionId}/events`, {
      event, ...(idempotencyKey ? { idempotency_key: idempotencyKey } : {}),
    });
  }

  advanceClock(missionId: string, to: number): Promise<MissionResponse> {
    return this.post(`/v1/missions/${missionId}/advance`, { to });
  }

  applyEdit(missionId: string, edit: unknown): Promise<MissionResponse> {
    return this.post(`/v1/missions/${missionId}/edits`, { edit });
  }

  reoptimize(missionId: string, config: unknown, waitSeconds = 120): Promise<{
    request_id: string;
    status: string;
    mission?: MissionResponse;
    result?: { schedule: ScheduleDoc; estimate: EstimateDoc };
  }> {
    return this.post(`/v1/missions/${missionId}/reoptimize`, {
      config, wait_seconds: waitSeconds,
    });
  }

  startOptimize(modelId: string, config: unknown, budget?: number): Promise<{
    request_id: string;
    problem_id: string;
    model_version: number;
  }> {
    return this.post("/v1/optimize", {
      model_id: modelId, config,
      ...(budget !== undefined ? { total_iteration_budget: budget } : {}),
    });
  }

  cancelRequest(requestId: string): Promise<{ status: string }> {
    return this.fetchFn(`${this.baseUrl}/v1/requests/${requestId}`, { method: "DELETE" })
      .then((r) => unwrap(r));
  }

  getPool(problemId: string): Promise<{ entries: { rank_key: number; schedule: ScheduleDoc; estimate: EstimateDoc }[] }> {
    return this.get(`/v1/pool/${problemId}`);
  }

  getProgress(problemId: string, since: number): Promise<{ events: ProgressEventDoc[]; next: number }> {
    return this.get(`/v1/progress/${problemId}?since=${since}`);
  }

  robustness(modelId: string, schedule: ScheduleDoc, n: number, seed: number): Promise<EstimateDoc> {
    return this.post("/v1/robustness", { model_id: modelId, schedule, n, seed });
  }
}
