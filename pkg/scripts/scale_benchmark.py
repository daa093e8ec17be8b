#!/usr/bin/env python3
"""Timings on the mission-scale synthetic instance (162 activities over
8 projects and 12 sols): dispatch latency, SAA throughput, time to the
first accepted improvement."""

from __future__ import annotations

import threading
import time

from solsched.dispatch import DispatchPlan, run_plan
from solsched.model import KpiWeights
from solsched.optimize import SearchConfig, initial_solution, optimize
from solsched.robustness import estimate_robustness
from solsched.scenarios import sample_scenarios
from solsched.synthetic import synthetic_mission


def main() -> None:
    model = synthetic_mission(seed=0)
    print(f"instance: {len(model.activities)} activities, "
          f"{len(model.project_ids)} projects, "
          f"{model.calendar.horizon_sols} sols")

    schedule = initial_solution(model, "random_permutation", seed=1)
    plan = DispatchPlan(model, schedule)
    scenarios = sample_scenarios(model, 0, 0, 50)
    run_plan(plan, scenarios[0])
    t0 = time.perf_counter()
    for sc in scenarios:
        run_plan(plan, sc)
    print(f"dispatch: {(time.perf_counter() - t0) / len(scenarios) * 1000:.1f} ms/scenario")

    t0 = time.perf_counter()
    est = estimate_robustness(model, schedule, n=1000, master_seed=2)
    print(f"SAA n=1000: {time.perf_counter() - t0:.2f} s "
          f"(p_hat {est.p_hat:.3f} +- {est.std_error:.3f})")

    cancel = threading.Event()
    events = []

    def on_progress(ev):
        events.append((time.perf_counter(), ev.best_objective))
        if len(events) >= 2:
            cancel.set()

    cfg = SearchConfig(kpi_weights=KpiWeights(1, 0, 0, 0), n_eval_scenarios=300,
                       master_seed=3, max_iterations=10 ** 6, restart_count=1,
                       max_seconds=60)
    t0 = time.perf_counter()
    optimize(model, schedule, cfg, cancel, on_progress=on_progress)
    if len(events) >= 2:
        print(f"first accepted improvement after {events[-1][0] - t0:.1f} s "
              f"(objective {events[0][1]:.3f} -> {events[-1][1]:.3f})")
    else:
        print("no improvement within 60 s")


if __name__ == "__main__":
    main()
