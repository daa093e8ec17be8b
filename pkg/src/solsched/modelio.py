"""Canonical structured-text (JSON) encoding of models, schedules, traces
and reports.

One schema family is shared by the model files on disk, the CLI reports,
the HTTP service payloads and the coordination store.  Canonical form is
UTF-8 JSON with sorted keys, two-space indent and a trailing newline, so
``encode(decode(text)) == text`` for any canonical document.
"""

from __future__ import annotations

import json
from typing import Any, Iterable

from .model import (
    Activity,
    ActivityWindow,
    DurationModel,
    EventRef,
    KpiWeights,
    MissionCalendar,
    MissionModel,
    ProjectModel,
    Resource,
    TemporalConstraint,
    merge_mission,
)

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Malformed model document."""


def canonical_dumps(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def canonical_loads(text: str) -> Any:
    return json.loads(text)


# ---------------------------------------------------------------- durations

def duration_to_doc(d: DurationModel) -> Any:
    if d.kind == "deterministic" and d.min_clip is None:
        return d.value
    doc: dict[str, Any] = {"kind": d.kind}
    if d.kind == "deterministic":
        doc["value"] = d.value
    elif d.kind == "modified_pert":
        doc.update(min=d.min, mode=d.mode, max=d.max, lam=d.lam)
    elif d.kind == "discrete":
        doc["values"] = [[v, p] for v, p in d.values]
    if d.min_clip is not None:
        doc["min_clip"] = d.min_clip
    return doc


def duration_from_doc(doc: Any) -> DurationModel:
    if isinstance(doc, (int, float)):
        return DurationModel.fixed(int(doc))
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ModelFormatError(f"bad duration document: {doc!r}")
    kind = doc["kind"]
    clip = doc.get("min_clip")
    if kind == "deterministic":
        return DurationModel(kind=kind, value=int(doc["value"]), min_clip=clip)
    if kind == "modified_pert":
        return DurationModel(kind=kind, min=int(doc["min"]), mode=int(doc["mode"]),
                             max=int(doc["max"]), lam=float(doc.get("lam", 4.0)), min_clip=clip)
    if kind == "discrete":
        return DurationModel(kind=kind,
                             values=tuple((int(v), float(p)) for v, p in doc["values"]),
                             min_clip=clip)
    raise ModelFormatError(f"unknown duration kind {kind!r}")


# ----------------------------------------------------------------- elements

def _window_to_doc(w: ActivityWindow | None) -> Any:
    if w is None:
        return None
    return {"kind": w.kind, "start": w.start, "end": w.end}


def _window_from_doc(doc: Any) -> ActivityWindow | None:
    if doc is None:
        return None
    return ActivityWindow(kind=doc["kind"], start=int(doc["start"]), end=int(doc["end"]))


def activity_to_doc(a: Activity) -> dict[str, Any]:
    doc: dict[str, Any] = {"id": a.id, "duration": duration_to_doc(a.duration)}
    if a.requirements:
        doc["requirements"] = [[r, q] for r, q in a.requirements]
    if a.eligible_crew:
        doc["eligible_crew"] = sorted(a.eligible_crew)
        doc["crew_needed"] = a.crew_needed
    if a.window is not None:
        doc["window"] = _window_to_doc(a.window)
    if a.same_sol_required:
        doc["same_sol_required"] = True
    if a.cost:
        doc["cost"] = a.cost
    if a.quality:
        doc["quality"] = a.quality
    return doc


def activity_from_doc(doc: dict[str, Any], project_id: str = "") -> Activity:
    return Activity(
        id=doc["id"],
        project_id=project_id,
        duration=duration_from_doc(doc["duration"]),
        requirements=tuple((r, int(q)) for r, q in doc.get("requirements", ())),
        eligible_crew=frozenset(doc.get("eligible_crew", ())),
        crew_needed=int(doc.get("crew_needed", 0)),
        window=_window_from_doc(doc.get("window")),
        same_sol_required=bool(doc.get("same_sol_required", False)),
        cost=float(doc.get("cost", 0.0)),
        quality=float(doc.get("quality", 0.0)),
    )


def constraint_to_doc(c: TemporalConstraint) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "id": c.id,
        "from": {"activity": c.from_event.activity_id, "anchor": c.from_event.anchor},
        "to": {"activity": c.to_event.activity_id, "anchor": c.to_event.anchor},
        "min_delay": duration_to_doc(c.min_delay),
    }
    if c.max_delay is not None:
        doc["max_delay"] = c.max_delay
    if c.same_sol:
        doc["same_sol"] = True
    if c.cross_project:
        doc["cross_project"] = True
    return doc


def constraint_from_doc(doc: dict[str, Any]) -> TemporalConstraint:
    return TemporalConstraint(
        id=doc.get("id", ""),
        from_event=EventRef(doc["from"]["activity"], doc["from"]["anchor"]),
        to_event=EventRef(doc["to"]["activity"], doc["to"]["anchor"]),
        min_delay=duration_from_doc(doc["min_delay"]),
        max_delay=doc.get("max_delay"),
        same_sol=bool(doc.get("same_sol", False)),
        cross_project=bool(doc.get("cross_project", False)),
    )


def resource_to_doc(r: Resource) -> dict[str, Any]:
    return {"id": r.id, "kind": r.kind.value, "capacity": r.capacity}


def resource_from_doc(doc: dict[str, Any]) -> Resource:
    return Resource(id=doc["id"], kind=doc.get("kind", "equipment"),
                    capacity=int(doc.get("capacity", 1)))


def calendar_to_doc(c: MissionCalendar) -> dict[str, Any]:
    return {
        "horizon_sols": c.horizon_sols,
        "minutes_per_sol": c.minutes_per_sol,
        "work_windows": [[s, e] for s, e in c.work_windows],
    }


def calendar_from_doc(doc: dict[str, Any]) -> MissionCalendar:
    return MissionCalendar(
        horizon_sols=int(doc["horizon_sols"]),
        work_windows=tuple((int(s), int(e)) for s, e in doc.get("work_windows", [[0, 1440]])),
        minutes_per_sol=int(doc.get("minutes_per_sol", 1440)),
    )


def project_to_doc(p: ProjectModel) -> dict[str, Any]:
    return {
        "id": p.id,
        "name": p.name,
        "priority_weight": p.priority_weight,
        "activities": [activity_to_doc(a) for a in p.activities],
        "constraints": [constraint_to_doc(c) for c in p.constraints],
    }


def project_from_doc(doc: dict[str, Any]) -> ProjectModel:
    pid = doc["id"]
    return ProjectModel(
        id=pid,
        name=doc.get("name", ""),
        activities=tuple(activity_from_doc(a, pid) for a in doc.get("activities", ())),
        constraints=tuple(constraint_from_doc(c) for c in doc.get("constraints", ())),
        priority_weight=float(doc.get("priority_weight", 1.0)),
    )


# -------------------------------------------------------------- model files

def model_to_doc(calendar: MissionCalendar, resources: Iterable[Resource],
                 projects: Iterable[ProjectModel]) -> dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "calendar": calendar_to_doc(calendar),
        "resources": [resource_to_doc(r) for r in resources],
        "projects": [project_to_doc(p) for p in projects],
    }


def model_from_doc(doc: dict[str, Any]) -> tuple[MissionCalendar, list[Resource], list[ProjectModel]]:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {version!r}")
    for key in ("calendar", "resources", "projects"):
        if key not in doc:
            raise ModelFormatError(f"missing top-level key {key!r}")
    calendar = calendar_from_doc(doc["calendar"])
    resources = [resource_from_doc(r) for r in doc["resources"]]
    projects = [project_from_doc(p) for p in doc["projects"]]
    return calendar, resources, projects


def mission_from_doc(doc: dict[str, Any]) -> MissionModel:
    calendar, resources, projects = model_from_doc(doc)
    return merge_mission(projects, resources, calendar)


def mission_to_doc(mission: MissionModel) -> dict[str, Any]:
    """Re-encode a flattened mission as a single-project-per-source document.

    Activities keep their namespaced ids so the document round-trips through
    :func:`mission_from_doc` unchanged (namespacing is idempotent)."""
    projects = []
    for pid in mission.project_ids or sorted({a.project_id for a in mission.activities}):
        acts = tuple(a for a in mission.activities if a.project_id == pid)
        cons = tuple(c for c in mission.constraints if c.id.startswith(pid + ":"))
        projects.append(ProjectModel(
            id=pid, activities=acts, constraints=cons,
            priority_weight=mission.priority_weights.get(pid, 1.0)))
    return model_to_doc(mission.calendar, mission.resources, projects)


def read_model_file(path) -> MissionModel:
    with open(path, "r", encoding="utf-8") as fh:
        return mission_from_doc(canonical_loads(fh.read()))


def write_model_file(path, doc: dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(doc))


# ------------------------------------------------------------ kpi weights

def kpi_weights_to_doc(w: KpiWeights) -> dict[str, Any]:
    return {
        "w_success": w.w_success,
        "w_expected_makespan": w.w_expected_makespan,
        "w_expected_cost": w.w_expected_cost,
        "w_workload_balance": w.w_workload_balance,
        "cost_scale": w.cost_scale,
    }


def kpi_weights_from_doc(doc: dict[str, Any]) -> KpiWeights:
    return KpiWeights(
        w_success=float(doc.get("w_success", 1.0)),
        w_expected_makespan=float(doc.get("w_expected_makespan", 0.0)),
        w_expected_cost=float(doc.get("w_expected_cost", 0.0)),
        w_workload_balance=float(doc.get("w_workload_balance", 0.0)),
        cost_scale=float(doc.get("cost_scale", 1.0)),
    )


# ------------------------------------------------- schedules, traces, reports

def schedule_to_doc(s) -> dict[str, Any]:
    doc: dict[str, Any] = {"priority_order": list(s.priority_order)}
    if s.assignments:
        doc["assignments"] = {a: list(c) for a, c in sorted(s.assignments.items())}
    if s.pinned_starts:
        doc["pinned_starts"] = dict(sorted(s.pinned_starts.items()))
    return doc


def schedule_from_doc(doc: dict[str, Any]):
    from .dispatch import Schedule
    return Schedule(
        priority_order=tuple(doc["priority_order"]),
        assignments={a: tuple(c) for a, c in doc.get("assignments", {}).items()},
        pinned_starts={a: int(m) for a, m in doc.get("pinned_starts", {}).items()},
    )


def trace_to_doc(trace) -> dict[str, Any]:
    entries = {}
    for aid, e in sorted(trace.entries.items()):
        entries[aid] = None if e is None else {"start": e.start, "end": e.end}
    return {
        "entries": entries,
        "success": trace.success,
        "failure_reason": trace.failure_reason,
        "violations": [
            {"element_id": v.element_id, "category": v.category, "message": v.message}
            for v in trace.violations
        ],
        "first_violation_minute": trace.first_violation_minute,
    }


def trace_from_doc(doc: dict[str, Any]):
    from .dispatch import ExecutionTrace, TraceEntry
    from .model import Violation
    entries = {
        aid: (None if e is None else TraceEntry(int(e["start"]), int(e["end"])))
        for aid, e in doc["entries"].items()
    }
    return ExecutionTrace(
        entries=entries,
        success=bool(doc["success"]),
        failure_reason=doc.get("failure_reason"),
        violations=tuple(Violation(v["element_id"], v["category"], v["message"])
                         for v in doc.get("violations", ())),
        first_violation_minute=doc.get("first_violation_minute"),
    )


def estimate_to_doc(est) -> dict[str, Any]:
    return {
        "p_hat": est.p_hat,
        "p_fail": est.p_fail,
        "n": est.n_samples,
        "std_error": est.std_error,
        "ci95": list(est.ci95),
        "kpis": {name: {"mean": k.mean, "std_error": k.std_error}
                 for name, k in sorted(est.kpis.items())},
        "seed": est.master_seed,
    }


def estimate_from_doc(doc: dict[str, Any]):
    from .robustness import KpiEstimate, RobustnessEstimate
    return RobustnessEstimate(
        p_hat=float(doc["p_hat"]),
        n_samples=int(doc["n"]),
        std_error=float(doc["std_error"]),
        ci95=(float(doc["ci95"][0]), float(doc["ci95"][1])),
        kpis={name: KpiEstimate(float(k["mean"]), float(k["std_error"]))
              for name, k in doc.get("kpis", {}).items()},
        master_seed=int(doc.get("seed", 0)),
    )


def validation_to_doc(report) -> dict[str, Any]:
    return {
        "valid": report.valid,
        "violations": [
            {"element_id": v.element_id, "category": v.category, "message": v.message}
            for v in report.violations
        ],
    }
