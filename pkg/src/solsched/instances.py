"""Built-in example instances used by tests, docs and the demo scripts."""

from __future__ import annotations

from .dispatch import Schedule
from .model import (
    Activity,
    ActivityWindow,
    DurationModel,
    MissionCalendar,
    MissionModel,
    ProjectModel,
    Resource,
    TemporalConstraint,
    merge_mission,
)

__all__ = [
    "four_task_line",
    "order_schedule",
    "soil_survey_project",
    "bacteria_project",
]


def four_task_line(a_duration: DurationModel | None = None) -> MissionModel:
    """Four tasks A, B, C, D competing for one bench over a two-sol horizon.

    The work day runs 9:00-14:00.  B and C need A finished first; D needs
    both B and C.  C must in addition wait at least an hour after A ends and
    run on the same sol as A; B only fits in the morning (9:00-12:00).

    With A's duration uncertain this is the canonical example of priority
    order driving robustness: under (A,B,C,D) any overrun of A past an hour
    pushes B to the next morning and C with it, killing C's same-sol
    requirement, while (A,C,B,D) survives by letting C run first at the cost
    of finishing D a sol later.
    """
    if a_duration is None:
        a_duration = DurationModel.choice([(60, 0.5), (90, 0.5)])
    bench = [("bench", 1)]
    project = ProjectModel(
        id="ops",
        name="four tasks on one bench",
        activities=(
            Activity(id="A", duration=a_duration, requirements=bench),
            Activity(id="B", duration=DurationModel.fixed(120), requirements=bench,
                     window=ActivityWindow("daily", 540, 720)),
            Activity(id="C", duration=DurationModel.fixed(60), requirements=bench),
            Activity(id="D", duration=DurationModel.fixed(60), requirements=bench),
        ),
        constraints=(
            TemporalConstraint(("A", "end"), ("B", "start")),
            TemporalConstraint(("A", "end"), ("C", "start"),
                               min_delay=DurationModel.fixed(60), same_sol=True),
            TemporalConstraint(("B", "end"), ("D", "start")),
            TemporalConstraint(("C", "end"), ("D", "start")),
        ),
    )
    calendar = MissionCalendar(horizon_sols=2, work_windows=((540, 840),))
    return merge_mission([project], [Resource("bench")], calendar)


def order_schedule(model: MissionModel, local_order: list[str],
                   project_id: str = "ops") -> Schedule:
    """Schedule from a list of un-namespaced activity ids (no crew)."""
    return Schedule(tuple(f"{project_id}:{a}" for a in local_order))


def soil_survey_project() -> ProjectModel:
    """Drone-supported subsurface survey: flyby, zone delimitation, then two
    measurement passes that each need the delimited zone."""
    return ProjectModel(
        id="survey",
        name="Soil dielectric 3D map",
        activities=(
            Activity(id="zone_drone_flyby", duration=DurationModel.pert(20, 30, 50)),
            Activity(id="zone_delimitation", duration=DurationModel.pert(30, 45, 90)),
            Activity(id="measure_radar", duration=DurationModel.pert(40, 60, 120)),
            Activity(id="measure_drone", duration=DurationModel.pert(30, 40, 80)),
        ),
        constraints=(
            TemporalConstraint(("zone_drone_flyby", "end"), ("zone_delimitation", "start")),
            TemporalConstraint(("zone_delimitation", "end"), ("measure_radar", "start")),
            TemporalConstraint(("zone_delimitation", "end"), ("measure_drone", "start")),
        ),
    )


def bacteria_project(minutes_per_sol: int = 1440) -> ProjectModel:
    """Culture growth protocol with a shared laminar-flow bench and a
    stochastic 1-3 sol incubation delay between culture and exposure."""
    laf = [("laf", 1)]
    sol = minutes_per_sol
    return ProjectModel(
        id="flora",
        name="Survival of human flora bacteria",
        activities=(
            Activity(id="prep_medium", duration=DurationModel.pert(30, 45, 75), requirements=laf),
            Activity(id="cult_lq_b", duration=DurationModel.pert(20, 30, 60), requirements=laf),
            Activity(id="expo_test_ctl", duration=DurationModel.pert(30, 40, 90), requirements=laf),
        ),
        constraints=(
            TemporalConstraint(("prep_medium", "end"), ("cult_lq_b", "start")),
            TemporalConstraint(
                ("cult_lq_b", "end"), ("expo_test_ctl", "start"),
                min_delay=DurationModel.choice(
                    [(1 * sol, 1 / 3), (2 * sol, 1 / 3), (3 * sol, 1 / 3)])),
        ),
    )
