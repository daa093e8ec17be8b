#!/usr/bin/env python3
"""Write the demo model, schedule and search-config files used by the CLI
examples in the README (and as UI fixtures)."""

from __future__ import annotations

import argparse
import pathlib

from solsched.instances import bacteria_project, four_task_line, order_schedule, soil_survey_project
from solsched.model import MissionCalendar, Resource, merge_mission
from solsched.modelio import canonical_dumps, mission_to_doc, schedule_to_doc
from solsched.optimize import SearchConfig, config_to_doc


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="demo", help="output directory")
    args = parser.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    line = four_task_line()
    (out / "four_task_model.json").write_text(canonical_dumps(mission_to_doc(line)))
    (out / "schedule_abcd.json").write_text(
        canonical_dumps(schedule_to_doc(order_schedule(line, list("ABCD")))))
    (out / "schedule_acbd.json").write_text(
        canonical_dumps(schedule_to_doc(order_schedule(line, ["A", "C", "B", "D"]))))

    research = merge_mission(
        [soil_survey_project(), bacteria_project()],
        [Resource("laf")],
        MissionCalendar(horizon_sols=6, work_windows=((540, 720), (810, 1080))))
    (out / "research_model.json").write_text(canonical_dumps(mission_to_doc(research)))

    cfg = SearchConfig(n_eval_scenarios=500, max_iterations=400, restart_count=2)
    (out / "search_config.json").write_text(canonical_dumps(config_to_doc(cfg)))
    print(f"wrote demo files to {out}/")


if __name__ == "__main__":
    main()
