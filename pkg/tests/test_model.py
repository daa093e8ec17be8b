from __future__ import annotations

import pytest

from solsched.instances import bacteria_project, four_task_line, soil_survey_project
from solsched.model import (
    Activity,
    DurationModel,
    EventRef,
    MergeError,
    MissionCalendar,
    ProjectModel,
    Resource,
    ResourceKind,
    TemporalConstraint,
    merge_mission,
    validate_mission,
    validate_model,
)
from solsched.modelio import (
    canonical_dumps,
    canonical_loads,
    mission_from_doc,
    mission_to_doc,
    model_to_doc,
)
from solsched.synthetic import random_discrete_instance, synthetic_mission

CAL = MissionCalendar(horizon_sols=2, work_windows=((540, 840),))


def simple_project(extra_constraints=()):
    bench = [("bench", 1)]
    return ProjectModel(
        id="p",
        activities=(
            Activity("A", duration=DurationModel.fixed(60), requirements=bench),
            Activity("B", duration=DurationModel.fixed(60), requirements=bench),
            Activity("C", duration=DurationModel.fixed(60), requirements=bench),
            Activity("D", duration=DurationModel.fixed(60), requirements=bench),
        ),
        constraints=(
            TemporalConstraint(("A", "end"), ("B", "start")),
            TemporalConstraint(("A", "end"), ("C", "start")),
            TemporalConstraint(("B", "end"), ("D", "start")),
            TemporalConstraint(("C", "end"), ("D", "start")),
        ) + tuple(extra_constraints),
    )


def test_valid_diamond_project():
    report = validate_model(simple_project(), CAL, [Resource("bench")])
    assert report.valid


def test_cycle_detection_names_members():
    cyclic = simple_project([TemporalConstraint(("D", "end"), ("A", "start"))])
    report = validate_model(cyclic, CAL, [Resource("bench")])
    assert not report.valid
    cycle = [v for v in report.violations if v.category == "cycle"]
    assert len(cycle) == 1
    members = set(cycle[0].element_id.split(","))
    assert members == {"A", "B", "C", "D"} or members == {"A", "C", "D"}


def test_capacity_violation():
    p = ProjectModel(id="p", activities=(
        Activity("x", duration=DurationModel.fixed(10), requirements=(("laf", 2),)),))
    report = validate_model(p, CAL, [Resource("laf", capacity=1)])
    assert any(v.category == "capacity" for v in report.violations)


def test_duration_invariants():
    assert DurationModel.pert(10, 5, 20).violations("x")  # mode below min
    assert DurationModel.choice([(10, 0.5), (20, 0.4)]).violations("x")  # mass != 1
    assert DurationModel.choice([(10, 0.5), (10, 0.5)]).violations("x")  # dup values
    assert not DurationModel.choice([(10, 0.5), (20, 0.5)]).violations("x")
    assert not DurationModel.pert(10, 10, 10).violations("x")


def test_nominal_values():
    assert DurationModel.fixed(45).nominal() == 45
    assert DurationModel.pert(10, 25, 60).nominal() == 25
    # highest probability wins; ties break toward the smaller value
    assert DurationModel.choice([(30, 0.2), (60, 0.8)]).nominal() == 60
    assert DurationModel.choice([(90, 0.5), (30, 0.5)]).nominal() == 30


def test_calendar_invariants():
    assert MissionCalendar(0).violations()
    assert MissionCalendar(1, work_windows=((100, 50),)).violations()
    assert MissionCalendar(1, work_windows=((0, 300), (200, 400))).violations()
    assert not MissionCalendar(3, work_windows=((0, 300), (400, 700), (710, 720)), minutes_per_sol=720).violations()


def test_merge_counts_and_namespacing():
    projects = [simple_project()]
    second = ProjectModel(id="q", activities=(
        Activity("A", duration=DurationModel.fixed(5)),))
    mission = merge_mission(projects + [second], [Resource("bench")], CAL)
    assert len(mission.activities) == 5
    assert set(mission.activity_ids) == {"p:A", "p:B", "p:C", "p:D", "q:A"}
    assert validate_mission(mission).valid


def test_merge_rejects_duplicate_project_ids():
    with pytest.raises(MergeError):
        merge_mission([simple_project(), simple_project()], [Resource("bench")], CAL)


def test_merge_rejects_dangling_cross_project_reference():
    bad = ProjectModel(id="q", activities=(Activity("x", duration=DurationModel.fixed(5)),),
                       constraints=(TemporalConstraint(
                           ("p:ghost", "end"), ("x", "start"), cross_project=True),))
    with pytest.raises(MergeError):
        merge_mission([bad], [], CAL)


def test_cross_project_constraint_resolves():
    a = ProjectModel(id="p", activities=(Activity("x", duration=DurationModel.fixed(5)),))
    b = ProjectModel(id="q", activities=(Activity("y", duration=DurationModel.fixed(5)),),
                     constraints=(TemporalConstraint(
                         ("p:x", "end"), ("y", "start"), cross_project=True),))
    mission = merge_mission([a, b], [], CAL)
    assert validate_mission(mission).valid
    (c,) = mission.constraints
    assert c.from_event == EventRef("p:x", "end")
    assert c.to_event == EventRef("q:y", "start")


def test_mission_scale_counts():
    mission = synthetic_mission(seed=1)
    assert len(mission.activities) == 162
    assert len(mission.project_ids) == 8
    assert mission.calendar.horizon_sols == 12
    assert validate_mission(mission).valid


def test_serialization_round_trip_byte_identical(line_model):
    doc = mission_to_doc(line_model)
    text = canonical_dumps(doc)
    again = canonical_dumps(canonical_loads(text))
    assert again == text
    mission = mission_from_doc(canonical_loads(text))
    assert canonical_dumps(mission_to_doc(mission)) == text


def test_round_trip_preserves_semantics():
    for builder in (four_task_line, lambda: merge_mission(
            [soil_survey_project(), bacteria_project()],
            [Resource("laf")], MissionCalendar(6, ((540, 1080),)))):
        mission = builder()
        doc = mission_to_doc(mission)
        back = mission_from_doc(doc)
        assert back == mission


def test_random_instances_validate_and_round_trip():
    for seed in range(40):
        mission = random_discrete_instance(seed)
        assert validate_mission(mission).valid, f"seed {seed}"
        text = canonical_dumps(mission_to_doc(mission))
        assert mission_from_doc(canonical_loads(text)) == mission
        assert canonical_dumps(mission_to_doc(mission_from_doc(canonical_loads(text)))) == text


def test_model_file_contract_shape():
    doc = model_to_doc(CAL, [Resource("bench")], [simple_project()])
    assert doc["format_version"] == 1
    assert set(doc) == {"format_version", "calendar", "resources", "projects"}
    with pytest.raises(Exception):
        mission_from_doc({"calendar": {}, "resources": [], "projects": []})  # no version
