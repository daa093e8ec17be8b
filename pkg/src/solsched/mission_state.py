"""The live mission ledger: frozen executed past, mutable planned future.

State is event-sourced: every transition appends one record to an
append-only log and bumps the version counter, and replaying the log from
scratch reproduces the state exactly.  The past never changes -- actual
events, once recorded, are permanent, and model edits that would touch a
completed activity are rejected.

Re-planning conditions the model on history: completed (or failed)
activities become deterministic constants replayed at their recorded
times, a still-running activity keeps its start and gets its duration
distribution truncated at the elapsed time, cancelled activities drop out
together with their constraints, and nothing new may start before the
current clock.  Stochastic inter-activity delays are left unconditioned;
their expiry is not directly observable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

from .dispatch import DispatchContext, Schedule, next_window_fit
from .model import Activity, DurationModel, MissionModel, validate_mission
from .modelio import (
    activity_from_doc,
    canonical_dumps,
    constraint_from_doc,
    mission_from_doc,
    mission_to_doc,
    schedule_from_doc,
    schedule_to_doc,
)
from .optimize import SearchConfig, SearchResult, _least_loaded_crew, optimize

__all__ = [
    "ActualEvent",
    "MissionState",
    "MissionStateError",
    "create_mission",
    "record_actual",
    "advance_clock",
    "apply_model_edit",
    "condition_problem",
    "reoptimize_future",
    "replay_log",
    "snapshot_doc",
]

EVENT_KINDS = ("started", "completed", "failed", "cancelled")

# fields of an in-progress activity that a model edit may still change
IN_PROGRESS_EDITABLE = ("cost", "quality")


class MissionStateError(ValueError):
    """Rejected state transition (the state is left untouched)."""


@dataclass(frozen=True)
class ActualEvent:
    activity_id: str
    kind: str  # started | completed | failed | cancelled
    at: int
    note: str = ""

    def to_doc(self) -> dict[str, Any]:
        return {"activity_id": self.activity_id, "kind": self.kind,
                "at": self.at, "note": self.note}

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "ActualEvent":
        return cls(doc["activity_id"], doc["kind"], int(doc["at"]), doc.get("note", ""))


@dataclass(frozen=True)
class MissionState:
    mission_id: str
    model: MissionModel
    now: int = 0
    version: int = 0
    model_version: int = 1
    history: tuple[ActualEvent, ...] = ()
    future_schedule: Schedule | None = None
    cancelled: dict[str, str] = field(default_factory=dict)
    at_risk: frozenset[str] = frozenset()
    actual_assignments: dict[str, tuple[str, ...]] = field(default_factory=dict)
    log: tuple[dict, ...] = ()

    # -- derived views -------------------------------------------------------

    def started_at(self) -> dict[str, int]:
        return {e.activity_id: e.at for e in self.history if e.kind == "started"}

    def finished_at(self) -> dict[str, int]:
        return {e.activity_id: e.at for e in self.history
                if e.kind in ("completed", "failed")}

    def in_progress(self) -> set[str]:
        return set(self.started_at()) - set(self.finished_at())

    def serialized_history(self) -> str:
        return canonical_dumps([e.to_doc() for e in self.history])

    def history_lines(self) -> tuple[str, ...]:
        """One canonical JSON line per actual event, append-only."""
        import json
        return tuple(json.dumps(e.to_doc(), sort_keys=True) for e in self.history)

    def log_lines(self) -> tuple[str, ...]:
        """One canonical JSON line per log record (the event-log file format)."""
        import json
        return tuple(json.dumps(r, sort_keys=True) for r in self.log)


def _append(state: MissionState, kind: str, payload: dict[str, Any],
            **changes) -> MissionState:
    new_state = replace(state, version=state.version + 1, **changes)
    record = {"version": new_state.version, "at": new_state.now,
              "kind": kind, "payload": payload}
    return replace(new_state, log=state.log + (record,))


def create_mission(mission_id: str, model: MissionModel,
                   schedule: Schedule | None = None) -> MissionState:
    payload = {"mission_id": mission_id, "model": mission_to_doc(model)}
    if schedule is not None:
        payload["schedule"] = schedule_to_doc(schedule)
    state = MissionState(mission_id=mission_id, model=model,
                         future_schedule=schedule)
    return _append(state, "mission_created", payload)


def record_actual(state: MissionState, event: ActualEvent) -> MissionState:
    """Append one actual event; the dispatchable future shrinks accordingly."""
    if event.kind not in EVENT_KINDS:
        raise MissionStateError(f"unknown event kind {event.kind!r}")
    if event.activity_id not in state.model.activities_by_id:
        raise MissionStateError(f"unknown activity {event.activity_id!r}")
    if event.at > state.now:
        raise MissionStateError("event timestamp is in the future; advance the clock first")
    started = state.started_at()
    finished = state.finished_at()
    aid = event.activity_id
    if event.kind == "started":
        if aid in started:
            raise MissionStateError(f"{aid!r} already started")
        if aid in state.cancelled:
            raise MissionStateError(f"{aid!r} is cancelled")
    elif event.kind in ("completed", "failed"):
        if aid not in started:
            raise MissionStateError(f"{aid!r} cannot complete before starting")
        if aid in finished:
            raise MissionStateError(f"{aid!r} already finished")
        if event.at < started[aid]:
            raise MissionStateError("completion precedes the recorded start")
    elif event.kind == "cancelled":
        if aid in finished:
            raise MissionStateError(f"{aid!r} already finished")
        if aid in state.cancelled:
            raise MissionStateError(f"{aid!r} already cancelled")

    cancelled = dict(state.cancelled)
    if event.kind == "cancelled":
        cancelled[aid] = event.note
    assignments = dict(state.actual_assignments)
    future = state.future_schedule
    if event.kind == "started":
        # remember who performs it; the binding outlives the future schedule
        if future is not None and aid in future.assignments:
            assignments[aid] = tuple(future.assignments[aid])
    if future is not None and event.kind in ("started", "cancelled"):
        if aid in future.priority_order:
            future = Schedule(
                tuple(a for a in future.priority_order if a != aid),
                {a: c for a, c in future.assignments.items() if a != aid},
                {a: m for a, m in future.pinned_starts.items() if a != aid},
            )
    return _append(state, "actual_recorded", {"event": event.to_doc()},
                   history=state.history + (event,),
                   cancelled=cancelled,
                   future_schedule=future,
                   actual_assignments=assignments,
                   at_risk=state.at_risk - {aid})


def _compute_at_risk(state: MissionState, now: int) -> frozenset[str]:
    started = state.started_at()
    out = set()
    for a in state.model.activities:
        if a.id in started or a.id in state.cancelled:
            continue
        if next_window_fit(state.model.calendar, a, now, a.duration.nominal()) is None:
            out.add(a.id)
    return frozenset(out)


def advance_clock(state: MissionState, to: int) -> MissionState:
    """Move the mission clock forward; unstarted activities whose last
    feasible start has passed are flagged at-risk (never auto-failed)."""
    if to < state.now:
        raise MissionStateError("clock cannot move backwards")
    if to == state.now:
        return state
    return _append(state, "clock_advanced", {"to": to},
                   now=to, at_risk=_compute_at_risk(state, to))


def _locked_fields_changed(old: Activity, new: Activity) -> list[str]:
    changed = []
    for f in ("duration", "requirements", "eligible_crew", "crew_needed",
              "window", "same_sol_required"):
        if getattr(old, f) != getattr(new, f):
            changed.append(f)
    return changed


def apply_model_edit(state: MissionState, edit: dict[str, Any]) -> MissionState:
    """Apply an add/remove/modify edit to the active model.

    Edits touching completed activities are rejected outright; edits to an
    in-progress activity may only change the fields listed in
    ``IN_PROGRESS_EDITABLE``.  The edited model must validate, otherwise the
    edit is rejected and the state unchanged.
    """
    op = edit.get("op")
    model = state.model
    started = state.started_at()
    finished = state.finished_at()
    acts = list(model.activities)
    cons = list(model.constraints)
    new_future_ids: list[str] = []

    if op == "add_activity":
        project_id = edit.get("project_id") or (model.project_ids[0] if model.project_ids else "adhoc")
        act = activity_from_doc(edit["activity"], project_id)
        aid = act.id if ":" in act.id else f"{project_id}:{act.id}"
        act = replace(act, id=aid, project_id=project_id)
        if aid in model.activities_by_id:
            raise MissionStateError(f"activity {aid!r} already exists")
        acts.append(act)
        new_future_ids.append(aid)
    elif op == "remove_activity":
        aid = edit["activity_id"]
        if aid not in model.activities_by_id:
            raise MissionStateError(f"unknown activity {aid!r}")
        if aid in finished:
            raise MissionStateError("cannot remove a completed activity")
        if aid in started:
            raise MissionStateError("cannot remove an in-progress activity")
        acts = [a for a in acts if a.id != aid]
        cons = [c for c in cons
                if c.from_event.activity_id != aid and c.to_event.activity_id != aid]
    elif op == "modify_activity":
        aid = edit["activity_id"]
        old = model.activities_by_id.get(aid)
        if old is None:
            raise MissionStateError(f"unknown activity {aid!r}")
        if aid in finished:
            raise MissionStateError("cannot modify a completed activity")
        new = activity_from_doc(edit["activity"], old.project_id)
        new = replace(new, id=aid, project_id=old.project_id)
        if aid in started:
            locked = _locked_fields_changed(old, new)
            if locked:
                raise MissionStateError(
                    f"in-progress activity: cannot change {locked}; "
                    f"editable fields are {list(IN_PROGRESS_EDITABLE)}")
        acts = [new if a.id == aid else a for a in acts]
    elif op == "add_constraint":
        c = constraint_from_doc(edit["constraint"])
        if not c.id:
            c = replace(c, id=f"edit{state.version:04d}")
        to_aid = c.to_event.activity_id
        if c.to_event.anchor == "start" and (to_aid in started or to_aid in finished):
            raise MissionStateError("constraint would retroactively bind a started activity")
        cons.append(c)
    elif op == "remove_constraint":
        cid = edit["constraint_id"]
        if all(c.id != cid for c in cons):
            raise MissionStateError(f"unknown constraint {cid!r}")
        cons = [c for c in cons if c.id != cid]
    else:
        raise MissionStateError(f"unknown edit op {op!r}")

    new_model = MissionModel(
        calendar=model.calendar, resources=model.resources,
        activities=tuple(acts), constraints=tuple(cons),
        project_ids=model.project_ids, priority_weights=model.priority_weights)
    report = validate_mission(new_model)
    if not report.valid:
        raise MissionStateError(f"edit produces an invalid model: {report}")

    future = state.future_schedule
    if future is not None:
        keep = [a for a in future.priority_order if a in new_model.activities_by_id]
        order = tuple(keep) + tuple(new_future_ids)
        assignments = {a: c for a, c in future.assignments.items()
                       if a in new_model.activities_by_id}
        for aid in new_future_ids:  # new activities enqueue last, unassigned crew filled greedily
            assignments.update(_least_loaded_crew(new_model, [aid]))
        future = Schedule(order, assignments,
                          {a: m for a, m in future.pinned_starts.items()
                           if a in new_model.activities_by_id})
    return _append(state, "model_edited", {"edit": edit},
                   model=new_model, model_version=state.model_version + 1,
                   future_schedule=future)


def condition_problem(state: MissionState) -> tuple[MissionModel, DispatchContext]:
    """Model and dispatch context conditioned on the executed history."""
    model = state.model
    started = state.started_at()
    finished = state.finished_at()
    keep: list[Activity] = []
    for a in model.activities:
        if a.id in state.cancelled:
            continue
        if a.id in finished:
            realized = max(0, finished[a.id] - started[a.id])
            keep.append(replace(a, duration=DurationModel.fixed(realized)))
        elif a.id in started:
            elapsed = max(0, state.now - started[a.id])
            keep.append(replace(a, duration=replace(a.duration, min_clip=elapsed)))
        else:
            keep.append(a)
    kept_ids = {a.id for a in keep}

    def happened(ev) -> bool:
        if ev.anchor == "start":
            return ev.activity_id in started
        return ev.activity_id in finished

    cons = []
    for c in model.constraints:
        if c.from_event.activity_id not in kept_ids or c.to_event.activity_id not in kept_ids:
            continue
        if happened(c.to_event):
            # both ends are history: the crew already honored whatever the
            # delay turned out to be, so the constraint must not be re-drawn
            # and re-checked against the recorded times
            cons.append(replace(c, min_delay=DurationModel.fixed(0),
                                max_delay=None, same_sol=False))
        else:
            cons.append(c)
    cons = tuple(cons)
    conditioned = MissionModel(
        calendar=model.calendar, resources=model.resources,
        activities=tuple(keep), constraints=cons,
        project_ids=model.project_ids, priority_weights=model.priority_weights)
    context = DispatchContext(
        clock_start=state.now,
        preset_starts={aid: at for aid, at in started.items() if aid in kept_ids},
        preset_assignments={aid: crew for aid, crew in state.actual_assignments.items()
                            if aid in kept_ids and aid in started})
    return conditioned, context


def reoptimize_future(state: MissionState, config: SearchConfig) -> tuple[MissionState, SearchResult]:
    """Re-plan everything not yet started, conditioned on history.

    The robustness reported with the new future schedule is conditional on
    what already happened.  Returns the new state and the search result.
    """
    conditioned, context = condition_problem(state)
    start = None
    if state.future_schedule is not None:
        dispatchable = sorted(a.id for a in conditioned.activities
                              if a.id not in context.preset_starts)
        if sorted(state.future_schedule.priority_order) == dispatchable:
            start = state.future_schedule
    result = optimize(conditioned, start, config, context=context)
    new_state = _append(
        state, "future_rescheduled",
        {"schedule": schedule_to_doc(result.best_schedule),
         "p_hat": result.best_estimate.p_hat,
         "config_seed": config.master_seed},
        future_schedule=result.best_schedule)
    return new_state, result


def replay_log(records: list[dict]) -> MissionState:
    """Rebuild the state by replaying the event log from version 0."""
    state: MissionState | None = None
    for rec in records:
        kind, payload = rec["kind"], rec["payload"]
        if kind == "mission_created":
            model = mission_from_doc(payload["model"])
            schedule = schedule_from_doc(payload["schedule"]) if "schedule" in payload else None
            state = create_mission(payload["mission_id"], model, schedule)
        elif state is None:
            raise MissionStateError("log does not begin with mission_created")
        elif kind == "actual_recorded":
            state = record_actual(state, ActualEvent.from_doc(payload["event"]))
        elif kind == "clock_advanced":
            state = advance_clock(state, int(payload["to"]))
        elif kind == "model_edited":
            state = apply_model_edit(state, payload["edit"])
        elif kind == "future_rescheduled":
            state = _append(state, "future_rescheduled", payload,
                            future_schedule=schedule_from_doc(payload["schedule"]))
        else:
            raise MissionStateError(f"unknown log record kind {kind!r}")
        if state.version != rec["version"]:
            raise MissionStateError(
                f"replay version mismatch: {state.version} != {rec['version']}")
    if state is None:
        raise MissionStateError("empty log")
    return state


def snapshot_doc(state: MissionState) -> dict[str, Any]:
    """Mission snapshot: the model document plus a ``state`` section."""
    doc = mission_to_doc(state.model)
    doc["state"] = {
        "mission_id": state.mission_id,
        "now": state.now,
        "version": state.version,
        "model_version": state.model_version,
        "history": [e.to_doc() for e in state.history],
        "cancelled": dict(sorted(state.cancelled.items())),
        "at_risk": sorted(state.at_risk),
        "actual_assignments": {a: list(c) for a, c in sorted(state.actual_assignments.items())},
        "future_schedule": (None if state.future_schedule is None
                            else schedule_to_doc(state.future_schedule)),
    }
    return doc
