from __future__ import annotations

import itertools

import numpy as np
import pytest

from solsched.dispatch import Schedule
from solsched.instances import four_task_line, order_schedule
from solsched.mission_state import (
    ActualEvent,
    MissionStateError,
    advance_clock,
    apply_model_edit,
    condition_problem,
    create_mission,
    record_actual,
    reoptimize_future,
    replay_log,
    snapshot_doc,
)
from solsched.model import DurationModel, KpiWeights
from solsched.modelio import activity_to_doc, canonical_dumps
from solsched.optimize import SearchConfig
from solsched.robustness import estimate_robustness, exact_robustness
from solsched.synthetic import synthetic_mission


def fresh(line_model):
    return create_mission("m", line_model, order_schedule(line_model, list("ABCD")))


def test_record_started_completed_fixes_realized_duration(line_model):
    st = fresh(line_model)
    st = advance_clock(st, 540)
    st = record_actual(st, ActualEvent("ops:A", "started", 540))
    st = advance_clock(st, 630)
    st = record_actual(st, ActualEvent("ops:A", "completed", 630))
    cond, ctx = condition_problem(st)
    a = cond.activities_by_id["ops:A"]
    assert a.duration == DurationModel.fixed(90)
    assert ctx.preset_starts == {"ops:A": 540}
    # the dispatcher replays A at its recorded time under any scenario
    from solsched.dispatch import dispatch
    from solsched.scenarios import sample_scenario
    trace = dispatch(cond, Schedule(("ops:C", "ops:B", "ops:D")),
                     sample_scenario(cond, 0, 0), context=ctx)
    assert trace.entries["ops:A"].start == 540
    assert trace.entries["ops:A"].end == 630


def test_completion_before_start_rejected(line_model):
    st = advance_clock(fresh(line_model), 600)
    with pytest.raises(MissionStateError):
        record_actual(st, ActualEvent("ops:A", "completed", 600))
    st = record_actual(st, ActualEvent("ops:A", "started", 590))
    with pytest.raises(MissionStateError):
        record_actual(st, ActualEvent("ops:A", "completed", 580))


def test_future_event_rejected(line_model):
    st = fresh(line_model)
    with pytest.raises(MissionStateError):
        record_actual(st, ActualEvent("ops:A", "started", 540))  # now is 0


def test_unknown_activity_rejected(line_model):
    st = advance_clock(fresh(line_model), 100)
    with pytest.raises(MissionStateError):
        record_actual(st, ActualEvent("ops:X", "started", 50))


def test_cancellation_removes_from_future(line_model):
    st = advance_clock(fresh(line_model), 600)
    st = record_actual(st, ActualEvent("ops:B", "cancelled", 600, "bad weather"))
    assert "ops:B" not in st.future_schedule.priority_order
    assert st.cancelled == {"ops:B": "bad weather"}
    cond, _ = condition_problem(st)
    assert "ops:B" not in cond.activities_by_id
    # constraints touching the cancelled activity disappear with it
    assert all("ops:B" not in (c.from_event.activity_id, c.to_event.activity_id)
               for c in cond.constraints)


def test_event_sourcing_replay_reproduces_state(line_model):
    st = fresh(line_model)
    st = advance_clock(st, 540)
    st = record_actual(st, ActualEvent("ops:A", "started", 540))
    st = advance_clock(st, 630)
    st = record_actual(st, ActualEvent("ops:A", "completed", 630))
    st = record_actual(st, ActualEvent("ops:B", "cancelled", 610, "drop"))
    st = apply_model_edit(st, {"op": "add_activity", "project_id": "ops",
                               "activity": {"id": "dust", "duration": 30}})
    replayed = replay_log(list(st.log))
    assert replayed == st


def test_versions_increment_every_transition(line_model):
    st = fresh(line_model)
    assert st.version == 1
    st2 = advance_clock(st, 10)
    assert st2.version == 2
    assert advance_clock(st2, 10) is st2  # zero advance: same state, same version


def test_past_immutability_under_operations(line_model):
    st = advance_clock(fresh(line_model), 700)
    st = record_actual(st, ActualEvent("ops:A", "started", 540))
    st = record_actual(st, ActualEvent("ops:A", "completed", 640))
    frozen = st.history_lines()
    frozen_log = st.log_lines()
    st2 = record_actual(st, ActualEvent("ops:C", "started", 700))
    st2 = apply_model_edit(st2, {"op": "add_activity", "project_id": "ops",
                                 "activity": {"id": "extra", "duration": 15}})
    st2 = advance_clock(st2, 900)
    assert st2.history_lines()[: len(frozen)] == frozen
    assert st2.log_lines()[: len(frozen_log)] == frozen_log


def test_at_risk_flagging():
    m = four_task_line()
    st = fresh(m)
    # past both sols' opportunity for B (morning window, last start 2040)
    st = advance_clock(st, 2100)
    assert "ops:B" in st.at_risk
    assert "ops:D" not in st.at_risk  # D still fits later on sol 2
    # flags are advisory: nothing is auto-failed
    assert not st.cancelled
    assert all(e.kind != "failed" for e in st.history)


def test_advance_backwards_rejected(line_model):
    st = advance_clock(fresh(line_model), 100)
    with pytest.raises(MissionStateError):
        advance_clock(st, 50)


def test_sol_rollover_arithmetic(line_model):
    st = advance_clock(fresh(line_model), 2 * 1440 - 1)
    assert st.model.calendar.sol_of(st.now) == 1
    st2 = advance_clock(st, 2 * 1440 - 1 + 1)
    assert st2.model.calendar.sol_of(st2.now) == 2


# ------------------------------------------------------------- model edits

def test_add_opportunistic_activity(line_model):
    st = fresh(line_model)
    st = apply_model_edit(st, {
        "op": "add_activity", "project_id": "ops",
        "activity": {"id": "record_dust_devil", "duration": 20,
                     "window": {"kind": "absolute", "start": 540, "end": 840}}})
    assert "ops:record_dust_devil" in st.model.activities_by_id
    assert st.model_version == 2
    # appears at the end of the dispatchable future, unpinned
    assert st.future_schedule.priority_order[-1] == "ops:record_dust_devil"
    assert "ops:record_dust_devil" not in st.future_schedule.pinned_starts


def test_remove_completed_activity_rejected(line_model):
    st = advance_clock(fresh(line_model), 700)
    st = record_actual(st, ActualEvent("ops:A", "started", 540))
    st = record_actual(st, ActualEvent("ops:A", "completed", 640))
    with pytest.raises(MissionStateError):
        apply_model_edit(st, {"op": "remove_activity", "activity_id": "ops:A"})


def test_modify_in_progress_restricted_to_future_facing_fields(line_model):
    st = advance_clock(fresh(line_model), 600)
    st = record_actual(st, ActualEvent("ops:A", "started", 540))
    act = st.model.activities_by_id["ops:A"]
    ok_doc = activity_to_doc(act)
    ok_doc["cost"] = 99.0
    st2 = apply_model_edit(st, {"op": "modify_activity", "activity_id": "ops:A",
                                "activity": ok_doc})
    assert st2.model.activities_by_id["ops:A"].cost == 99.0
    bad_doc = activity_to_doc(act)
    bad_doc["duration"] = 999
    with pytest.raises(MissionStateError):
        apply_model_edit(st, {"op": "modify_activity", "activity_id": "ops:A",
                              "activity": bad_doc})


def test_edit_that_invalidates_model_rejected(line_model):
    st = fresh(line_model)
    with pytest.raises(MissionStateError):
        apply_model_edit(st, {"op": "add_activity", "project_id": "ops",
                              "activity": {"id": "bad", "duration": 10,
                                           "requirements": [["bench", 5]]}})
    with pytest.raises(MissionStateError):  # would create a precedence cycle
        apply_model_edit(st, {"op": "add_constraint", "constraint": {
            "from": {"activity": "ops:D", "anchor": "end"},
            "to": {"activity": "ops:A", "anchor": "start"}, "min_delay": 0}})


def test_history_prefix_bitwise_stable_after_midmission_edit(line_model):
    st = advance_clock(fresh(line_model), 700)
    st = record_actual(st, ActualEvent("ops:A", "started", 540))
    st = record_actual(st, ActualEvent("ops:A", "completed", 630))
    prefix = canonical_dumps([r for r in st.log])
    st2 = apply_model_edit(st, {"op": "modify_activity", "activity_id": "ops:C",
                                "activity": {"id": "C", "duration": 45}})
    cfg = SearchConfig(kpi_weights=KpiWeights(1, 0, 0, 0), n_eval_scenarios=60,
                       master_seed=0, max_iterations=30, restart_count=1)
    st2, _ = reoptimize_future(st2, cfg)
    assert canonical_dumps(list(st2.log[: len(st.log)])) == prefix


# ----------------------------------------------------------- reoptimization

def test_all_completed_future_empty_certainty(line_model):
    st = advance_clock(fresh(line_model), 3000)
    plan = [("ops:A", 540, 600), ("ops:B", 600, 720), ("ops:C", 720, 780), ("ops:D", 780, 840)]
    for aid, s, e in plan:
        st = record_actual(st, ActualEvent(aid, "started", s))
        st = record_actual(st, ActualEvent(aid, "completed", e))
    cfg = SearchConfig(kpi_weights=KpiWeights(1, 0, 0, 0), n_eval_scenarios=50,
                       master_seed=1, max_iterations=10, restart_count=1)
    st2, result = reoptimize_future(st, cfg)
    assert st2.future_schedule.priority_order == ()
    assert result.best_estimate.p_hat == 1.0


def test_reoptimizer_orders_same_sol_feasible_continuation(line_model):
    st = advance_clock(fresh(line_model), 630)
    st = record_actual(st, ActualEvent("ops:A", "started", 540))
    st = record_actual(st, ActualEvent("ops:A", "completed", 630))
    cond, ctx = condition_problem(st)
    # oracle: each of the 3! continuations, exactly
    values = {}
    for perm in itertools.permutations(["ops:B", "ops:C", "ops:D"]):
        values[perm] = exact_robustness(cond, Schedule(perm), context=ctx)
    assert values[("ops:C", "ops:B", "ops:D")] == 1.0
    assert values[("ops:B", "ops:C", "ops:D")] == 0.0
    winners = {p for p, v in values.items() if v == 1.0}
    assert winners == {("ops:C", "ops:B", "ops:D")}
    cfg = SearchConfig(kpi_weights=KpiWeights(1, 0, 0, 0), n_eval_scenarios=50,
                       master_seed=3, max_iterations=80, restart_count=2)
    st2, result = reoptimize_future(st, cfg)
    assert st2.future_schedule.priority_order[0] == "ops:C"
    assert exact_robustness(cond, st2.future_schedule, context=ctx) == 1.0


def test_future_starts_after_now_on_synthetic_mission():
    m = synthetic_mission(seed=8, n_projects=3, n_activities=24, horizon_sols=12)
    from solsched.optimize import initial_solution
    st = create_mission("syn", m, initial_solution(m, "serial_sgs"))
    st = advance_clock(st, 6 * 1440)  # sol 6 of 12
    cfg = SearchConfig(kpi_weights=KpiWeights(1, 0, 0, 0), n_eval_scenarios=40,
                       master_seed=2, max_iterations=20, restart_count=1)
    st2, result = reoptimize_future(st, cfg)
    cond, ctx = condition_problem(st)
    from solsched.dispatch import dispatch
    from solsched.scenarios import sample_scenario
    trace = dispatch(cond, st2.future_schedule, sample_scenario(cond, 0, 0), context=ctx)
    for aid, entry in trace.entries.items():
        if entry is not None:
            assert entry.start >= st.now


def test_in_progress_duration_conditioning():
    m2 = four_task_line(a_duration=DurationModel.pert(30, 60, 120))
    st = create_mission("m2", m2, order_schedule(m2, list("ABCD")))
    st = advance_clock(st, 630)
    st = record_actual(st, ActualEvent("ops:A", "started", 540))
    cond, ctx = condition_problem(st)
    a = cond.activities_by_id["ops:A"]
    assert a.duration.min_clip == 90  # elapsed minutes
    from solsched.scenarios import sample_scenarios
    for sc in sample_scenarios(cond, 5, 0, 200):
        assert sc.realized["ops:A"] > 90


def test_snapshot_contains_model_and_state_sections(line_model):
    st = advance_clock(fresh(line_model), 700)
    st = record_actual(st, ActualEvent("ops:A", "started", 540))
    doc = snapshot_doc(st)
    assert doc["format_version"] == 1
    assert set(doc) == {"format_version", "calendar", "resources", "projects", "state"}
    assert doc["state"]["now"] == 700
    assert doc["state"]["history"][0]["activity_id"] == "ops:A"


# ------------------------------------------------------------------ fuzzing

def test_event_sequence_fuzz_replay_and_history_prefix():
    m = four_task_line()
    rng = np.random.default_rng(0)
    aids = [a.id for a in m.activities]
    for trial in range(150):
        st = create_mission("fz", m, order_schedule(m, list("ABCD")))
        prefixes = [st.history_lines()]
        for _ in range(int(rng.integers(2, 12))):
            op = rng.integers(0, 4)
            try:
                if op == 0:
                    st = advance_clock(st, st.now + int(rng.integers(0, 400)))
                elif op == 1:
                    st = record_actual(st, ActualEvent(
                        aids[int(rng.integers(0, 4))], "started",
                        max(0, st.now - int(rng.integers(0, 50)))))
                elif op == 2:
                    st = record_actual(st, ActualEvent(
                        aids[int(rng.integers(0, 4))], "completed",
                        max(0, st.now - int(rng.integers(0, 20)))))
                else:
                    st = record_actual(st, ActualEvent(
                        aids[int(rng.integers(0, 4))], "cancelled", st.now))
            except MissionStateError:
                continue
            # every history seen so far stays a prefix of the new one
            h = st.history_lines()
            for old in prefixes:
                assert h[: len(old)] == old
            prefixes.append(h)
        assert replay_log(list(st.log)) == st
