"""Optimization agents: pull work from the store, compute, publish.

Agents are independent workers that talk only to the coordination store
and tolerate both high round-trip latency and their own death: one-shot
actions are computed locally and applied through idempotency keys, and a
running optimize request is served in bounded slices -- seed from the
pool's current best, search for a slice of iterations, publish any
improvement -- so a killed agent loses at most one unpublished slice.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace

from .coordination import StoreClient, StoreUnreachable, VersionConflict
from .dispatch import DispatchContext
from .mission_state import replay_log, reoptimize_future
from .model import MissionModel
from .modelio import estimate_to_doc, mission_from_doc, schedule_from_doc, schedule_to_doc
from .optimize import config_from_doc, objective, optimize
from .robustness import estimate_robustness

__all__ = ["AgentConfig", "agent_loop", "Agent"]


@dataclass(frozen=True)
class AgentConfig:
    agent_id: str
    poll_interval: float = 1.0
    heartbeat_interval: float = 10.0
    slice_iterations: int = 50
    capabilities: dict | None = None
    backoff_base: float = 0.5
    backoff_max: float = 8.0


def _seed_for(config: AgentConfig, request_id: str, slice_index: int) -> int:
    # process-independent seed derivation (str.hash is salted per process)
    import hashlib
    digest = hashlib.sha256(f"{config.agent_id}|{request_id}|{slice_index}".encode()).digest()
    return int.from_bytes(digest[:6], "big")


def _strip_activity(model: MissionModel, activity_id: str) -> MissionModel:
    acts = tuple(a for a in model.activities if a.id != activity_id)
    cons = tuple(c for c in model.constraints
                 if activity_id not in (c.from_event.activity_id, c.to_event.activity_id))
    return MissionModel(calendar=model.calendar, resources=model.resources,
                        activities=acts, constraints=cons,
                        project_ids=model.project_ids,
                        priority_weights=model.priority_weights)


def execute_one_shot(client: StoreClient, config: AgentConfig, request: dict) -> str | None:
    """Compute the action locally, then apply its effect exactly once."""
    payload = request["payload"]
    action = payload.get("action")
    rid = request["id"]
    effect_key = payload.get("idempotency_key") or f"effect:{rid}"

    if action == "evaluate_schedule":
        doc, version = client.fetch_model(payload["model_id"], payload.get("model_version"))
        model = mission_from_doc(doc)
        schedule = schedule_from_doc(payload["schedule"])
        est = estimate_robustness(model, schedule, n=int(payload.get("n", 1000)),
                                  master_seed=int(payload.get("seed", 0)))
        ref = f"result:{rid}"
        client.apply_named_effect(effect_key, "put_result",
                                  {"ref": ref, "doc": estimate_to_doc(est)})
        return ref

    if action == "rescore_without_activity":
        doc, version = client.fetch_model(payload["model_id"], payload.get("model_version"))
        model = _strip_activity(mission_from_doc(doc), payload["activity_id"])
        entries = client.fetch_pool(payload["problem_id"])
        rescored = []
        for i, entry in enumerate(entries):
            sched = schedule_from_doc(entry["schedule"])
            aid = payload["activity_id"]
            sched = type(sched)(
                tuple(a for a in sched.priority_order if a != aid),
                {a: c for a, c in sched.assignments.items() if a != aid},
                {a: m for a, m in sched.pinned_starts.items() if a != aid})
            est = estimate_robustness(model, sched, n=int(payload.get("n", 1000)),
                                      master_seed=int(payload.get("seed", 0)))
            rescored.append({"entry_index": i, "estimate": estimate_to_doc(est)})
        ref = f"result:{rid}"
        client.apply_named_effect(effect_key, "put_result",
                                  {"ref": ref, "doc": {"rescored": rescored,
                                                       "removed": payload["activity_id"]}})
        return ref

    if action == "reoptimize_mission":
        mission_id = payload["mission_id"]
        records = client.fetch_mission_log(mission_id)
        state = replay_log(records)
        search = config_from_doc(payload.get("config", {}))
        new_state, result = reoptimize_future(state, search)
        ref = f"result:{rid}"
        effects = {"effects": [
            {"kind": "append_mission_record",
             "payload": {"mission_id": mission_id,
                         "record": new_state.log[-1],
                         "expected_version": state.version}},
            {"kind": "put_result",
             "payload": {"ref": ref,
                         "doc": {"schedule": schedule_to_doc(result.best_schedule),
                                 "estimate": estimate_to_doc(result.best_estimate)}}},
        ]}
        client.apply_named_effect(effect_key, "batch", effects)
        return ref

    raise ValueError(f"unknown one-shot action {action!r}")


def work_optimize_slice(client: StoreClient, config: AgentConfig, request: dict,
                        slice_index: int) -> int:
    """One bounded slice of a running optimize request; publishes the best
    schedule found and reports consumed iterations."""
    payload = request["payload"]
    model_doc, version = client.fetch_model(payload["model_id"], payload.get("model_version"))
    model = mission_from_doc(model_doc)
    problem_id = payload["problem_id"]
    search = config_from_doc(payload.get("config", {}))
    budget = payload.get("total_iteration_budget")
    remaining = None if budget is None else budget - request.get("iterations_done", 0)
    iterations = config.slice_iterations if remaining is None \
        else max(0, min(config.slice_iterations, remaining))
    if iterations == 0:
        return 0
    search = replace(search,
                     master_seed=_seed_for(config, request["id"], slice_index),
                     max_iterations=iterations,
                     restart_count=1,
                     max_seconds=None)

    start = None
    pool = client.fetch_pool(problem_id)
    if pool:
        cand = schedule_from_doc(pool[0]["schedule"])
        if sorted(cand.priority_order) == sorted(a.id for a in model.activities):
            start = cand

    context = DispatchContext()
    result = optimize(model, start, search, context=context)
    rank = objective(result.unbiased_estimate, search.kpi_weights,
                     model.calendar.horizon_minutes)
    try:
        client.publish(problem_id, schedule_to_doc(result.best_schedule),
                       estimate_to_doc(result.unbiased_estimate),
                       config.agent_id, rank, version)
    except VersionConflict:
        return result.iterations_used  # model moved on; drop the stale slice
    client.append_progress(problem_id, {
        "agent": config.agent_id,
        "iterations": result.iterations_used,
        "best_objective": rank,
        "best_p_hat": result.unbiased_estimate.p_hat,
    })
    client.report_iterations(request["id"], result.iterations_used)
    return result.iterations_used


def agent_loop(client: StoreClient, config: AgentConfig,
               stop: threading.Event, clock) -> None:
    """Run until ``stop`` is set.  Store outages back off exponentially and
    lose nothing; completed work is acknowledged through the store only."""
    backoff = config.backoff_base
    registered = False
    last_heartbeat = -1e18
    slice_counters: dict[str, int] = {}
    while not stop.is_set():
        try:
            if not registered:
                client.register(config.agent_id, config.capabilities or {})
                registered = True
            now = clock.now()
            if now - last_heartbeat >= config.heartbeat_interval:
                client.heartbeat(config.agent_id)
                last_heartbeat = now

            request = client.claim(config.agent_id)
            if request is not None:
                try:
                    ref = execute_one_shot(client, config, request)
                    client.complete(request["id"], config.agent_id, ref)
                except VersionConflict as exc:
                    client.fail(request["id"], f"stale version: {exc}")
                except StoreUnreachable:
                    raise
                except Exception as exc:  # a failed action must not kill the agent
                    client.fail(request["id"], repr(exc))
                backoff = config.backoff_base
                continue

            running = client.poll(config.agent_id)["running"]
            if running:
                req = min(running, key=lambda r: r["id"])
                k = slice_counters.get(req["id"], 0)
                slice_counters[req["id"]] = k + 1
                work_optimize_slice(client, config, req, k)
            else:
                clock.sleep(config.poll_interval)
            backoff = config.backoff_base
        except StoreUnreachable:
            clock.sleep(backoff)
            backoff = min(backoff * 2, config.backoff_max)


class Agent:
    """Thread wrapper used by the service's in-process agent pool and by the
    test harnesses; ``kill`` stops it abruptly (no deregistration)."""

    def __init__(self, client: StoreClient, config: AgentConfig, clock):
        self.client = client
        self.config = config
        self.clock = clock
        self.stop_flag = threading.Event()
        self.thread = threading.Thread(
            target=agent_loop, args=(client, config, self.stop_flag, clock),
            name=f"agent-{config.agent_id}", daemon=True)

    def start(self) -> "Agent":
        self.thread.start()
        return self

    def kill(self, join_timeout: float = 5.0) -> None:
        self.stop_flag.set()
        self.thread.join(timeout=join_timeout)
