#!/usr/bin/env python3
"""Generate the checked-in fixtures consumed by the frontend test suite:
the survey-project model document and a mid-mission (sol 6) snapshot pair
(before and after re-planning the future)."""

from __future__ import annotations

import argparse
import pathlib

from solsched.dispatch import deterministic_view
from solsched.instances import soil_survey_project
from solsched.mission_state import ActualEvent, advance_clock, condition_problem, create_mission, record_actual, reoptimize_future
from solsched.model import KpiWeights, MissionCalendar, Resource, merge_mission
from solsched.modelio import canonical_dumps, mission_to_doc, trace_to_doc
from solsched.mission_state import snapshot_doc
from solsched.optimize import SearchConfig, initial_solution
from solsched.scenarios import nominal_scenario
from solsched.synthetic import synthetic_mission
from solsched.dispatch import dispatch


def survey_model_doc() -> dict:
    # un-namespaced document, exactly what the graphical editor produces and
    # the server stores verbatim
    from solsched.modelio import model_to_doc
    calendar = MissionCalendar(horizon_sols=6, work_windows=((540, 720), (810, 1080)))
    return model_to_doc(calendar, [], [soil_survey_project()])


def ui_fixture_mission():
    """Three research projects over twelve sols: chains of bench work
    separated by multi-sol incubation delays, three crew, one shared
    laminar-flow bench."""
    import numpy as np

    from solsched.model import (
        Activity,
        DurationModel,
        ProjectModel,
        ResourceKind,
        TemporalConstraint,
    )

    rng = np.random.default_rng(61)
    sol = 1440
    crew = [Resource(f"crew{c}", ResourceKind.CREW_MEMBER, 1) for c in range(3)]
    laf = Resource("laf", ResourceKind.EQUIPMENT, 1)
    projects = []
    for p in range(3):
        acts, cons = [], []
        prev = None
        for i in range(8):
            lo = int(rng.integers(60, 90))
            mode = lo + int(rng.integers(20, 50))
            hi = mode + int(rng.integers(30, 70))
            reqs = (("laf", 1),) if rng.random() < 0.3 else ()
            acts.append(Activity(
                id=f"step{i}", duration=DurationModel.pert(lo, mode, hi),
                requirements=reqs,
                eligible_crew=frozenset({f"crew{p}", f"crew{(p + i) % 3}"}),
                crew_needed=1, cost=float(rng.integers(1, 9))))
            if prev is not None:
                if i in (2, 5):
                    delay = DurationModel.choice([(2 * sol, 0.5), (3 * sol, 0.5)])
                elif i == 7:
                    delay = DurationModel.choice([(3 * sol, 0.5), (4 * sol, 0.5)])
                else:
                    delay = DurationModel.fixed(0)
                cons.append(TemporalConstraint((prev, "end"), (f"step{i}", "start"),
                                               min_delay=delay))
            prev = f"step{i}"
        projects.append(ProjectModel(id=f"proj{p}", name=f"project {p}",
                                     activities=tuple(acts), constraints=tuple(cons)))
    calendar = MissionCalendar(horizon_sols=12,
                               work_windows=((540, 720), (810, 1080)))
    return merge_mission(projects, crew + [laf], calendar)


def sol6_fixture() -> tuple[dict, dict]:
    import numpy as np

    from solsched.dispatch import Schedule

    model = ui_fixture_mission()
    serial = initial_solution(model, "serial_sgs")
    # the crew flies with a hand-shuffled, unoptimized order: plenty of room
    # for the reoptimizer to visibly improve the future
    order = list(serial.priority_order)
    np.random.default_rng(7).shuffle(order)
    schedule = Schedule(tuple(order), serial.assignments)
    state = create_mission("sol6", model, schedule)

    # replay the first six sols: everything planned before sol 6 happened,
    # except one morning activity cancelled for weather
    planned = deterministic_view(model, serial)
    sol6_minute = 6 * model.calendar.minutes_per_sol
    done = [(aid, e) for aid, e in planned.entries.items()
            if e is not None and e.end < sol6_minute]
    cancelled = next((aid for aid, e in sorted(done, key=lambda kv: kv[1].start)
                      if e.start >= 4 * model.calendar.minutes_per_sol), None)
    moments: list[tuple[int, int, str, str]] = []
    for aid, e in done:
        if aid == cancelled:
            moments.append((e.start, 0, "cancelled", aid))
        else:
            moments.append((e.start, 0, "started", aid))
            moments.append((e.end, 1, "completed", aid))
    for at, _, kind, aid in sorted(moments):
        state = advance_clock(state, at)
        note = "EVA scrubbed: weather" if kind == "cancelled" else ""
        state = record_actual(state, ActualEvent(aid, kind, at, note))
    state = advance_clock(state, sol6_minute)

    def planned_trace(st):
        cond, ctx = condition_problem(st)
        trace = dispatch(cond, st.future_schedule, nominal_scenario(cond), context=ctx)
        return trace_to_doc(trace)

    from solsched.robustness import estimate_robustness

    cond, ctx = condition_problem(state)
    before_est = estimate_robustness(cond, state.future_schedule, n=500,
                                     master_seed=11, context=ctx)
    before = {"snapshot": snapshot_doc(state), "trace": planned_trace(state),
              "p_hat": before_est.p_hat}
    cfg = SearchConfig(kpi_weights=KpiWeights(1, 0, 0, 0), n_eval_scenarios=200,
                       master_seed=11, max_iterations=150, restart_count=2)
    state2, result = reoptimize_future(state, cfg)
    after = {"snapshot": snapshot_doc(state2), "trace": planned_trace(state2),
             "p_hat": result.best_estimate.p_hat}
    return before, after


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="frontend/fixtures")
    args = parser.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "survey_model.json").write_text(canonical_dumps(survey_model_doc()))
    before, after = sol6_fixture()
    (out / "sol6_before.json").write_text(canonical_dumps(before))
    (out / "sol6_after.json").write_text(canonical_dumps(after))
    print(f"wrote UI fixtures to {out}/")


if __name__ == "__main__":
    main()
