"""HTTP service fronting the coordination store.

All endpoints live under ``/v1`` and exchange the canonical document
schema.  Mutating endpoints accept an ``idempotency_key``; repeating a
mutation with its key returns the first response verbatim.  Long
computations are delegated to agents through the store and never block
request handling; progress is served as a resumable event feed (polling
and SSE).  Every response carries the relevant model/state version so
clients can detect staleness.

Endpoint catalogue
------------------
POST   /v1/models                     upload model document -> {model_id, version}
GET    /v1/models/{id}[/versions/{v}] fetch canonical document
POST   /v1/validate                   validation report for a document
POST   /v1/missions                   create mission from a stored model
GET    /v1/missions/{id}              snapshot (model + state section)
GET    /v1/missions/{id}/log          event log records [?since=]
POST   /v1/missions/{id}/events       record an actual event
POST   /v1/missions/{id}/advance      advance the mission clock
POST   /v1/missions/{id}/edits        apply a model edit
POST   /v1/missions/{id}/reoptimize   re-plan the future (agent one-shot)
POST   /v1/optimize                   start a running optimize request
GET    /v1/requests/{id}              request status
DELETE /v1/requests/{id}              cancel a request
GET    /v1/pool/{problem_id}          solution pool entries
GET    /v1/progress/{problem_id}      progress events [?since=] (+ /stream SSE)
POST   /v1/robustness                 synchronous robustness report
POST   /v1/trace                      synchronous dispatch trace (Gantt data)
POST   /v1/agent/*                    agent wire protocol (register, heartbeat,
                                      poll, claim, publish, effect, complete,
                                      fail, iterations, progress, result)

Error shape: {"error": {"message": ..., "fields": [...]}} with HTTP 400 for
malformed payloads, 404 for unknown ids, 409 for version conflicts (the
current version is included).
"""

from __future__ import annotations

import asyncio
import json
import threading
from contextlib import asynccontextmanager
from typing import Any

from fastapi import Body, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .agent import Agent, AgentConfig
from .coordination import (
    PROTOCOL_VERSION,
    CoordinationStore,
    LocalStoreClient,
    StoreError,
    VersionConflict,
    problem_id_of,
)
from .dispatch import Schedule, deterministic_view, dispatch
from .mission_state import (
    ActualEvent,
    MissionState,
    MissionStateError,
    advance_clock,
    apply_model_edit,
    condition_problem,
    create_mission,
    record_actual,
    replay_log,
    snapshot_doc,
)
from .model import validate_mission
from .modelio import (
    ModelFormatError,
    canonical_dumps,
    estimate_to_doc,
    mission_from_doc,
    schedule_from_doc,
    trace_to_doc,
    validation_to_doc,
)
from .robustness import estimate_robustness
from .scenarios import nominal_scenario, sample_scenario
from .service_helpers import error_response  # re-exported for tests

__all__ = ["create_app", "ServiceRuntime"]


class ServiceRuntime:
    """Store plus the in-process agent pool behind one service instance."""

    def __init__(self, store: CoordinationStore, n_agents: int = 0,
                 agent_latency: float = 0.0, slice_iterations: int = 50):
        self.store = store
        self.agents: list[Agent] = []
        self._states: dict[str, MissionState] = {}
        self._lock = threading.Lock()
        for i in range(n_agents):
            client = LocalStoreClient(store, latency=agent_latency)
            cfg = AgentConfig(agent_id=f"svc-agent-{i}", poll_interval=0.02,
                              heartbeat_interval=1.0, slice_iterations=slice_iterations)
            self.agents.append(Agent(client, cfg, store.clock))

    def start(self) -> None:
        for a in self.agents:
            a.start()

    def stop(self) -> None:
        for a in self.agents:
            a.kill()
        self.store.close()

    # mission state cache, refreshed from the store log
    def state_of(self, mission_id: str) -> MissionState:
        records = self.store.mission_log(mission_id)
        with self._lock:
            cached = self._states.get(mission_id)
            if cached is not None and cached.version == len(records):
                return cached
            state = replay_log(records)
            self._states[mission_id] = state
            return state

    def commit(self, state: MissionState) -> MissionState:
        """Append the newest log record optimistically; refresh on conflict."""
        new_record = state.log[-1]
        self.store.append_mission_record(state.mission_id, new_record,
                                         expected_version=state.version - 1)
        with self._lock:
            self._states[state.mission_id] = state
        return state


def _model_from_payload(store: CoordinationStore, body: dict) -> tuple[Any, str | None, int | None]:
    if "model" in body:
        return mission_from_doc(body["model"]), None, None
    if "model_id" in body:
        doc, version = store.get_model(body["model_id"], body.get("model_version"))
        return mission_from_doc(doc), body["model_id"], version
    raise HTTPException(status_code=400, detail=error_response(
        "payload needs 'model' or 'model_id'", ["model"]))


def create_app(store: CoordinationStore, *, n_agents: int = 0,
               agent_latency: float = 0.0, slice_iterations: int = 50) -> FastAPI:
    runtime = ServiceRuntime(store, n_agents, agent_latency, slice_iterations)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        runtime.start()
        yield
        runtime.stop()

    app = FastAPI(title="mission scheduling service", version="1", lifespan=lifespan)
    app.state.runtime = runtime

    @app.exception_handler(VersionConflict)
    async def _conflict(request: Request, exc: VersionConflict):
        return JSONResponse(status_code=409, content=error_response(
            str(exc), current_version=exc.current_version))

    @app.exception_handler(StoreError)
    async def _store_error(request: Request, exc: StoreError):
        return JSONResponse(status_code=404, content=error_response(str(exc)))

    @app.exception_handler(MissionStateError)
    async def _state_error(request: Request, exc: MissionStateError):
        return JSONResponse(status_code=400, content=error_response(str(exc)))

    @app.exception_handler(ModelFormatError)
    async def _format_error(request: Request, exc: ModelFormatError):
        return JSONResponse(status_code=400, content=error_response(str(exc)))

    def idempotent(body: dict, fn):
        key = body.get("idempotency_key")
        if not key:
            return fn()
        result, _ = store.apply_effect(f"api:{key}", fn)
        return result

    # ------------------------------------------------------------- models

    @app.post("/v1/models")
    def post_model(body: dict = Body(...)):
        doc = body.get("model")
        if doc is None:
            raise HTTPException(status_code=400, detail=error_response(
                "missing 'model'", ["model"]))
        mission = mission_from_doc(doc)  # raises ModelFormatError on bad shape
        report = validate_mission(mission)
        if not report.valid:
            raise HTTPException(status_code=400, detail={
                **error_response("model does not validate"),
                "validation": validation_to_doc(report)})
        model_id = body.get("model_id", "default")

        def run():
            version = store.put_model(model_id, doc, body.get("expected_version"))
            return {"model_id": model_id, "version": version}

        return idempotent(body, run)

    @app.get("/v1/models/{model_id}")
    def get_model(model_id: str):
        doc, version = store.get_model(model_id)
        return {"model_id": model_id, "version": version, "model": doc,
                "canonical": canonical_dumps(doc)}

    @app.get("/v1/models/{model_id}/versions/{version}")
    def get_model_version(model_id: str, version: int):
        doc, v = store.get_model(model_id, version)
        return {"model_id": model_id, "version": v, "model": doc,
                "canonical": canonical_dumps(doc)}

    @app.post("/v1/validate")
    def post_validate(body: dict = Body(...)):
        mission = mission_from_doc(body.get("model"))
        return validation_to_doc(validate_mission(mission))

    # ------------------------------------------------------------ missions

    def mission_response(state: MissionState) -> dict:
        return {"mission_id": state.mission_id, "version": state.version,
                "model_version": state.model_version,
                "snapshot": snapshot_doc(state)}

    @app.post("/v1/missions")
    def post_mission(body: dict = Body(...)):
        mission_id = body.get("mission_id", "mission")

        def run():
            doc, version = store.get_model(body["model_id"], body.get("model_version"))
            model = mission_from_doc(doc)
            schedule = None
            if body.get("schedule") is not None:
                schedule = schedule_from_doc(body["schedule"])
            state = create_mission(mission_id, model, schedule)
            store.append_mission_record(mission_id, state.log[-1], expected_version=0)
            with runtime._lock:
                runtime._states[mission_id] = state
            return mission_response(state)

        if "model_id" not in body:
            raise HTTPException(status_code=400, detail=error_response(
                "missing 'model_id'", ["model_id"]))
        return idempotent(body, run)

    @app.get("/v1/missions/{mission_id}")
    def get_mission(mission_id: str):
        return mission_response(runtime.state_of(mission_id))

    @app.get("/v1/missions/{mission_id}/log")
    def get_mission_log(mission_id: str, since: int = 0):
        records = store.mission_log(mission_id, since)
        return {"mission_id": mission_id, "records": records,
                "next": since + len(records)}

    @app.get("/v1/missions/{mission_id}/trace")
    def get_mission_trace(mission_id: str):
        """Nominal dispatch of the remaining plan conditioned on history;
        the Gantt data source for the future region."""
        state = runtime.state_of(mission_id)
        conditioned, ctx = condition_problem(state)
        if state.future_schedule is None:
            raise HTTPException(status_code=400, detail=error_response(
                "mission has no future schedule"))
        trace = dispatch(conditioned, state.future_schedule,
                         nominal_scenario(conditioned), context=ctx)
        out = trace_to_doc(trace)
        out["mission_id"] = mission_id
        out["version"] = state.version
        return out

    @app.post("/v1/missions/{mission_id}/events")
    def post_event(mission_id: str, body: dict = Body(...)):
        if "event" not in body:
            raise HTTPException(status_code=400, detail=error_response(
                "missing 'event'", ["event"]))

        def run():
            state = runtime.state_of(mission_id)
            new_state = record_actual(state, ActualEvent.from_doc(body["event"]))
            return mission_response(runtime.commit(new_state))

        return idempotent(body, run)

    @app.post("/v1/missions/{mission_id}/advance")
    def post_advance(mission_id: str, body: dict = Body(...)):
        if "to" not in body:
            raise HTTPException(status_code=400, detail=error_response(
                "missing 'to'", ["to"]))

        def run():
            state = runtime.state_of(mission_id)
            new_state = advance_clock(state, int(body["to"]))
            if new_state is state:
                return mission_response(state)
            return mission_response(runtime.commit(new_state))

        return idempotent(body, run)

    @app.post("/v1/missions/{mission_id}/edits")
    def post_edit(mission_id: str, body: dict = Body(...)):
        if "edit" not in body:
            raise HTTPException(status_code=400, detail=error_response(
                "missing 'edit'", ["edit"]))

        def run():
            state = runtime.state_of(mission_id)
            new_state = apply_model_edit(state, body["edit"])
            return mission_response(runtime.commit(new_state))

        return idempotent(body, run)

    @app.post("/v1/missions/{mission_id}/reoptimize")
    def post_reoptimize(mission_id: str, body: dict = Body(...)):
        state = runtime.state_of(mission_id)  # 404 on unknown mission
        payload = {"action": "reoptimize_mission", "mission_id": mission_id,
                   "config": body.get("config", {}),
                   "idempotency_key": body.get("idempotency_key")}
        rid = store.submit_request("one_shot", payload,
                                   idempotency_key=body.get("idempotency_key"))
        wait_s = float(body.get("wait_seconds", 0.0))
        if wait_s > 0:
            deadline = store.clock.now() + wait_s
            while store.clock.now() < deadline:
                req = store.get_request(rid)
                if req.status in ("done", "failed", "cancelled"):
                    break
                store.clock.sleep(0.02)
        req = store.get_request(rid)
        out = {"request_id": rid, "status": req.status, "error": req.error}
        if req.status == "done":
            out["mission"] = mission_response(runtime.state_of(mission_id))
            if req.result_ref:
                out["result"] = store.get_result(req.result_ref)
        return out

    # ------------------------------------------------------------ optimize

    @app.post("/v1/optimize")
    def post_optimize(body: dict = Body(...)):
        if "model_id" not in body:
            raise HTTPException(status_code=400, detail=error_response(
                "missing 'model_id'", ["model_id"]))
        version = body.get("model_version") or store.model_version(body["model_id"])
        config_doc = body.get("config", {})
        problem_id = problem_id_of(body["model_id"], version, config_doc)
        payload = {"model_id": body["model_id"], "model_version": version,
                   "problem_id": problem_id, "config": config_doc}
        if body.get("total_iteration_budget") is not None:
            payload["total_iteration_budget"] = int(body["total_iteration_budget"])
        rid = store.submit_request("running_optimize", payload,
                                   idempotency_key=body.get("idempotency_key"))
        return {"request_id": rid, "problem_id": problem_id, "model_version": version}

    @app.get("/v1/requests/{request_id}")
    def get_request(request_id: str):
        return store.get_request(request_id).to_doc()

    @app.delete("/v1/requests/{request_id}")
    def delete_request(request_id: str):
        store.cancel_request(request_id)
        return store.get_request(request_id).to_doc()

    @app.get("/v1/pool/{problem_id}")
    def get_pool(problem_id: str):
        return {"problem_id": problem_id,
                "entries": [e.to_doc() for e in store.fetch_pool(problem_id)]}

    @app.get("/v1/progress/{problem_id}")
    def get_progress(problem_id: str, since: int = 0):
        events = store.progress_since(problem_id, since)
        return {"problem_id": problem_id, "events": events,
                "next": since + len(events)}

    @app.get("/v1/progress/{problem_id}/stream")
    async def stream_progress(problem_id: str, since: int = 0):
        async def gen():
            cursor = since
            idle = 0
            while idle < 600:
                events = store.progress_since(problem_id, cursor)
                if events:
                    idle = 0
                    for ev in events:
                        cursor = ev["index"] + 1
                        yield f"id: {ev['index']}\ndata: {json.dumps(ev)}\n\n"
                else:
                    idle += 1
                    await asyncio.sleep(0.05)

        return StreamingResponse(gen(), media_type="text/event-stream")

    # ---------------------------------------------------- sync computations

    @app.post("/v1/robustness")
    def post_robustness(body: dict = Body(...)):
        model, model_id, version = _model_from_payload(store, body)
        schedule = schedule_from_doc(body["schedule"])
        est = estimate_robustness(model, schedule,
                                  n=int(body.get("n", 1000)),
                                  master_seed=int(body.get("seed", 0)),
                                  workers=int(body.get("workers", 1)))
        out = estimate_to_doc(est)
        if model_id is not None:
            out["model_id"], out["model_version"] = model_id, version
        return out

    @app.post("/v1/trace")
    def post_trace(body: dict = Body(...)):
        model, model_id, version = _model_from_payload(store, body)
        schedule = schedule_from_doc(body["schedule"])
        if body.get("nominal", True) and "seed" not in body:
            trace = deterministic_view(model, schedule)
        else:
            sc = sample_scenario(model, int(body.get("seed", 0)),
                                 int(body.get("scenario_index", 0)))
            trace = dispatch(model, schedule, sc)
        out = trace_to_doc(trace)
        if model_id is not None:
            out["model_id"], out["model_version"] = model_id, version
        return out

    # -------------------------------------------------- agent wire protocol

    client = LocalStoreClient(store)

    @app.post("/v1/agent/register")
    def agent_register(body: dict = Body(...)):
        client.register(body["agent_id"], body.get("capabilities"))
        return {"protocol_version": PROTOCOL_VERSION}

    @app.post("/v1/agent/heartbeat")
    def agent_heartbeat(body: dict = Body(...)):
        client.heartbeat(body["agent_id"])
        return {"protocol_version": PROTOCOL_VERSION}

    @app.post("/v1/agent/poll")
    def agent_poll(body: dict = Body(...)):
        return client.poll(body["agent_id"])

    @app.post("/v1/agent/claim")
    def agent_claim(body: dict = Body(...)):
        return {"protocol_version": PROTOCOL_VERSION,
                "request": client.claim(body["agent_id"])}

    @app.post("/v1/agent/publish")
    def agent_publish(body: dict = Body(...)):
        accepted = client.publish(body["problem_id"], body["schedule"],
                                  body["estimate"], body["agent_id"],
                                  float(body["rank_key"]), int(body["model_version"]))
        return {"protocol_version": PROTOCOL_VERSION, "accepted": accepted}

    @app.post("/v1/agent/effect")
    def agent_effect(body: dict = Body(...)):
        result, applied = client.apply_named_effect(body["key"], body["kind"],
                                                    body["payload"])
        return {"protocol_version": PROTOCOL_VERSION, "result": result,
                "applied": applied}

    @app.post("/v1/agent/complete")
    def agent_complete(body: dict = Body(...)):
        client.complete(body["request_id"], body["agent_id"], body.get("result_ref"))
        return {"protocol_version": PROTOCOL_VERSION}

    @app.post("/v1/agent/fail")
    def agent_fail(body: dict = Body(...)):
        client.fail(body["request_id"], body.get("error", ""))
        return {"protocol_version": PROTOCOL_VERSION}

    @app.post("/v1/agent/iterations")
    def agent_iterations(body: dict = Body(...)):
        client.report_iterations(body["request_id"], int(body["iterations"]))
        return {"protocol_version": PROTOCOL_VERSION}

    @app.post("/v1/agent/progress")
    def agent_progress(body: dict = Body(...)):
        client.append_progress(body["stream"], body["event"])
        return {"protocol_version": PROTOCOL_VERSION}

    @app.post("/v1/agent/result")
    def agent_result(body: dict = Body(...)):
        client.put_result(body["ref"], body["doc"])
        return {"protocol_version": PROTOCOL_VERSION}

    @app.post("/v1/agent/mission_log")
    def agent_mission_log(body: dict = Body(...)):
        return {"protocol_version": PROTOCOL_VERSION,
                "records": client.fetch_mission_log(body["mission_id"],
                                                    int(body.get("since", 0)))}

    @app.post("/v1/agent/request")
    def agent_request(body: dict = Body(...)):
        return {"protocol_version": PROTOCOL_VERSION,
                "request": client.get_request(body["request_id"])}

    @app.post("/v1/agent/claim_renew")
    def agent_claim_renew(body: dict = Body(...)):
        client.renew_lease(body["request_id"], body["agent_id"])
        return {"protocol_version": PROTOCOL_VERSION}

    return app
