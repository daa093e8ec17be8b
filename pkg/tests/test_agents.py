from __future__ import annotations

import threading
import time

import pytest

from solsched.agent import Agent, AgentConfig, execute_one_shot, work_optimize_slice
from solsched.coordination import (
    CoordinationStore,
    LocalStoreClient,
    ManualClock,
    ScaledClock,
    problem_id_of,
)
from solsched.instances import four_task_line, order_schedule
from solsched.mission_state import create_mission, replay_log
from solsched.modelio import mission_to_doc, schedule_to_doc
from solsched.optimize import config_to_doc, SearchConfig
from solsched.model import KpiWeights


def search_cfg(**kw):
    base = dict(kpi_weights=KpiWeights(1, 0, 0, 0), n_eval_scenarios=120,
                master_seed=2, max_iterations=40, restart_count=1)
    base.update(kw)
    return config_to_doc(SearchConfig(**base))


def fresh_store(**kw):
    kw.setdefault("clock", ManualClock())
    kw.setdefault("claim_seed", 0)
    return CoordinationStore(None, **kw)


def put_four_task(store):
    m = four_task_line()
    store.put_model("demo", mission_to_doc(m))
    return m


# ------------------------------------------------------------------ one-shots

def test_one_shot_evaluate_schedule():
    store = fresh_store()
    m = put_four_task(store)
    sched = schedule_to_doc(order_schedule(m, list("ABCD")))
    rid = store.submit_request("one_shot", {
        "action": "evaluate_schedule", "model_id": "demo", "model_version": 1,
        "schedule": sched, "n": 2000, "seed": 9})
    client = LocalStoreClient(store)
    cfg = AgentConfig(agent_id="w0")
    req = store.claim_one_shot("w0")
    ref = execute_one_shot(client, cfg, req.to_doc())
    store.complete_request(req.id, "w0", ref)
    result = store.get_result(ref)
    assert abs(result["p_hat"] - 0.5) <= 3 * result["std_error"]
    assert store.get_request(rid).status == "done"


def test_one_shot_rescore_without_activity():
    store = fresh_store()
    m = put_four_task(store)
    pid = "demo@v1@p"
    full = schedule_to_doc(order_schedule(m, ["A", "C", "B", "D"]))
    store.publish_solution(pid, full, {"p_hat": 1.0}, "seed-agent", 0.0, 1)
    rid = store.submit_request("one_shot", {
        "action": "rescore_without_activity", "problem_id": pid,
        "model_id": "demo", "model_version": 1, "activity_id": "ops:C",
        "n": 500, "seed": 1})
    client = LocalStoreClient(store)
    req = store.claim_one_shot("w0")
    ref = execute_one_shot(client, AgentConfig(agent_id="w0"), req.to_doc())
    result = store.get_result(ref)
    assert result["removed"] == "ops:C"
    assert len(result["rescored"]) == 1
    # without C (and its same-sol constraint) the remaining plan always works
    assert result["rescored"][0]["estimate"]["p_hat"] == 1.0


def test_one_shot_reoptimize_mission_effect_applied_once():
    store = fresh_store()
    m = put_four_task(store)
    state = create_mission("m1", m, order_schedule(m, list("ABCD")))
    store.append_mission_record("m1", state.log[-1], expected_version=0)
    payload = {"action": "reoptimize_mission", "mission_id": "m1",
               "config": search_cfg(), "idempotency_key": "reopt-1"}
    rid = store.submit_request("one_shot", payload, idempotency_key="reopt-1")
    client = LocalStoreClient(store)
    req = store.claim_one_shot("w0")
    ref1 = execute_one_shot(client, AgentConfig(agent_id="w0"), req.to_doc())
    # a second executor (say, after lease expiry) re-runs the action; the
    # mission log still gains exactly one reschedule record
    ref2 = execute_one_shot(client, AgentConfig(agent_id="w1"), req.to_doc())
    records = store.mission_log("m1")
    assert len(records) == 2
    assert records[-1]["kind"] == "future_rescheduled"
    final = replay_log(records)
    order = final.future_schedule.priority_order
    assert order.index("ops:C") < order.index("ops:B")


def test_unknown_action_fails_request():
    store = fresh_store()
    put_four_task(store)
    store.submit_request("one_shot", {"action": "mystery"})
    client = LocalStoreClient(store)
    req = store.claim_one_shot("w0")
    with pytest.raises(ValueError):
        execute_one_shot(client, AgentConfig(agent_id="w0"), req.to_doc())


# ---------------------------------------------------- deterministic kill test

def run_rotation(store, agent_ids, rid, kill_after_round=None, kill_agent=None,
                 max_rounds=50):
    """Single-threaded deterministic harness: agents take turns working one
    optimize slice each; optionally one agent dies after a given round."""
    clients = {a: LocalStoreClient(store) for a in agent_ids}
    configs = {a: AgentConfig(agent_id=a, slice_iterations=20) for a in agent_ids}
    slice_counters = {a: 0 for a in agent_ids}
    alive = list(agent_ids)
    for rnd in range(max_rounds):
        if kill_after_round is not None and rnd == kill_after_round:
            alive = [a for a in alive if a != kill_agent]
        req = store.get_request(rid)
        if req.status != "pending":
            break
        for a in alive:
            req = store.get_request(rid)
            if req.status != "pending":
                break
            work_optimize_slice(clients[a], configs[a], req.to_doc(),
                                slice_counters[a])
            slice_counters[a] += 1
    return store.get_request(rid)


def submit_running(store, budget):
    put_four_task(store)
    pid = problem_id_of("demo", 1, {"t": 1})
    rid = store.submit_request("running_optimize", {
        "model_id": "demo", "model_version": 1, "problem_id": pid,
        "config": search_cfg(max_iterations=20),
        "total_iteration_budget": budget})
    return pid, rid


def test_kill_one_of_three_agents_mid_optimize():
    budget = 120
    # three agents, one dies after the first round
    store3 = fresh_store()
    pid3, rid3 = submit_running(store3, budget)
    final = run_rotation(store3, ["a0", "a1", "a2"], rid3,
                         kill_after_round=1, kill_agent="a2")
    assert final.status == "done"
    pool3 = store3.fetch_pool(pid3)
    assert pool3, "pool must not be empty after the kill"

    # single-agent baseline at the same total budget
    store1 = fresh_store()
    pid1, rid1 = submit_running(store1, budget)
    run_rotation(store1, ["solo"], rid1)
    pool1 = store1.fetch_pool(pid1)
    assert pool1
    assert pool3[0].rank_key <= pool1[0].rank_key + 1e-9


def test_pool_top1_monotone_during_run():
    store = fresh_store()
    pid, rid = submit_running(store, 200)
    client = LocalStoreClient(store)
    cfg = AgentConfig(agent_id="mono", slice_iterations=20)
    best_seen = []
    for k in range(10):
        req = store.get_request(rid)
        if req.status != "pending":
            break
        work_optimize_slice(client, cfg, req.to_doc(), k)
        pool = store.fetch_pool(pid)
        if pool:
            best_seen.append(pool[0].rank_key)
    assert best_seen == sorted(best_seen, reverse=True)[::-1] or \
        all(b <= a for a, b in zip(best_seen, best_seen[1:]))


def test_new_agent_joins_and_contributes():
    store = fresh_store()
    pid, rid = submit_running(store, 60)
    run_rotation(store, ["a0"], rid, max_rounds=1)
    agents_before = {e.producing_agent for e in store.fetch_pool(pid)}
    run_rotation(store, ["late"], rid, max_rounds=2)
    assert store.get_request(rid).status == "done"
    assert "a0" in agents_before
    assert store.fetch_pool(pid)  # the late joiner kept the pool alive


# --------------------------------------------------------- threaded harnesses

def test_threaded_agents_with_injected_latency():
    clock = ScaledClock(1000.0)  # 1 virtual second = 1 ms real
    store = CoordinationStore(None, clock=clock, claim_seed=5)
    m = put_four_task(store)
    pid = problem_id_of("demo", 1, {"lat": 1})
    rid = store.submit_request("running_optimize", {
        "model_id": "demo", "model_version": 1, "problem_id": pid,
        "config": search_cfg(max_iterations=15, n_eval_scenarios=60),
        "total_iteration_budget": 90})
    agents = []
    for i in range(3):
        client = LocalStoreClient(store, latency=5.0)  # 5 virtual seconds per call
        cfg = AgentConfig(agent_id=f"lag{i}", poll_interval=1.0,
                          heartbeat_interval=10.0, slice_iterations=15)
        agents.append(Agent(client, cfg, clock).start())
    deadline = time.monotonic() + 30
    while time.monotonic() < deadline:
        if store.get_request(rid).status == "done":
            break
        time.sleep(0.02)
    for a in agents:
        a.kill()
    req = store.get_request(rid)
    assert req.status == "done"
    assert req.iterations_done >= 90
    pool = store.fetch_pool(pid)
    assert pool and len(pool) <= store.pool_k
    assert [e.rank_key for e in pool] == sorted(e.rank_key for e in pool)


def test_agent_survives_store_outage():
    clock = ScaledClock(1000.0)
    store = CoordinationStore(None, clock=clock, claim_seed=2)
    m = put_four_task(store)
    fail = threading.Event()
    fail.set()  # store unreachable from the start
    client = LocalStoreClient(store, fail_flag=fail)
    agent = Agent(client, AgentConfig(agent_id="flaky", poll_interval=0.5,
                                      slice_iterations=10), clock).start()
    sched = schedule_to_doc(order_schedule(m, list("ABCD")))
    rid = store.submit_request("one_shot", {
        "action": "evaluate_schedule", "model_id": "demo", "model_version": 1,
        "schedule": sched, "n": 200, "seed": 0})
    time.sleep(0.2)  # agent is backing off against the outage
    assert store.get_request(rid).status == "pending"
    fail.clear()  # store comes back
    deadline = time.monotonic() + 20
    while time.monotonic() < deadline:
        if store.get_request(rid).status == "done":
            break
        time.sleep(0.02)
    agent.kill()
    assert store.get_request(rid).status == "done"
    assert store.get_result(store.get_request(rid).result_ref)["p_hat"] >= 0.0
