"""Schedule execution under one scenario.

The dispatcher plays the as-soon-as-possible protocol: scanning time
forward, it starts at every instant the highest-priority activities whose
incoming delays have elapsed, whose resources are free, and whose realized
duration fits inside a remaining execution window (an activity is atomic --
it never straddles a window end, so it only starts when it can complete).

Activities that share at least one resource are served strictly in priority
order: a lower-priority activity may not claim a shared resource before
every higher-priority activity sharing it has started.  This queue
discipline is what makes the priority permutation meaningful under
uncertainty -- reordering two activities changes who survives a duration
overrun, which is exactly the effect the robustness estimate measures.

The window-fit test uses the scenario's realized duration, so an activity
is never interrupted by a window end; a scenario in which an activity can
no longer fit anywhere simply leaves it unscheduled and fails the mission.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Mapping

from .model import Activity, MissionModel, Violation, find_precedence_cycle
from .scenarios import Scenario, nominal_scenario, scenario_complete

__all__ = [
    "Schedule",
    "DispatchProtocol",
    "DispatchContext",
    "TraceEntry",
    "ExecutionTrace",
    "DispatchError",
    "DispatchPlan",
    "dispatch",
    "deterministic_view",
    "validate_schedule",
    "next_window_fit",
    "trace_kpis",
]


class DispatchError(ValueError):
    """Inputs violate the dispatch preconditions."""


@dataclass(frozen=True)
class Schedule:
    """Priority-ordered, resource-assigned plan.

    ``priority_order`` is a total order over the dispatchable activities;
    ``assignments`` picks, for each activity needing crew, which eligible
    crew members perform it.  ``pinned_starts`` are planned start minutes
    kept for display; they never influence dispatching.
    """

    priority_order: tuple[str, ...]
    assignments: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    pinned_starts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "priority_order", tuple(self.priority_order))
        object.__setattr__(self, "assignments",
                           {a: tuple(c) for a, c in dict(self.assignments).items()})
        object.__setattr__(self, "pinned_starts", dict(self.pinned_starts))

    def rank(self, activity_id: str) -> int:
        return self.priority_order.index(activity_id)


@dataclass(frozen=True)
class DispatchProtocol:
    kind: str = "asap"

    def __post_init__(self) -> None:
        if self.kind != "asap":
            raise DispatchError(f"unknown dispatch protocol {self.kind!r}")


ASAP = DispatchProtocol("asap")


@dataclass(frozen=True)
class DispatchContext:
    """Execution context for re-planning: nothing may start before
    ``clock_start``, and ``preset_starts`` replays activities that already
    started (they hold their resources but are exempt from priority and
    window rules -- they are facts, not decisions).  ``preset_assignments``
    records which crew performed them, so a still-running activity keeps
    its crew busy into the future."""

    clock_start: int = 0
    preset_starts: Mapping[str, int] = field(default_factory=dict)
    preset_assignments: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "preset_starts", dict(self.preset_starts))
        object.__setattr__(self, "preset_assignments",
                           {a: tuple(c) for a, c in dict(self.preset_assignments).items()})


DEFAULT_CONTEXT = DispatchContext()


@dataclass(frozen=True)
class TraceEntry:
    start: int
    end: int


@dataclass(frozen=True)
class ExecutionTrace:
    """Realized timeline: per-activity interval or None if never scheduled;
    ``success`` is True iff every activity completed within the horizon and
    no temporal constraint was violated."""

    entries: dict[str, TraceEntry | None]
    success: bool
    failure_reason: str | None
    violations: tuple[Violation, ...] = ()
    first_violation_minute: int | None = None

    def makespan(self) -> int:
        ends = [e.end for e in self.entries.values() if e is not None]
        return max(ends) if ends else 0


def _effective_resources(act: Activity, schedule: Schedule) -> dict[str, int]:
    needs: dict[str, int] = {}
    for rid, qty in act.requirements:
        needs[rid] = needs.get(rid, 0) + qty
    for crew in schedule.assignments.get(act.id, ()):
        needs[crew] = needs.get(crew, 0) + 1
    return needs


def validate_schedule(model: MissionModel, schedule: Schedule,
                      context: DispatchContext = DEFAULT_CONTEXT) -> list[Violation]:
    """Permutation completeness, crew eligibility and capacity checks."""
    out: list[Violation] = []
    dispatchable = [a.id for a in model.activities if a.id not in context.preset_starts]
    if sorted(schedule.priority_order) != sorted(dispatchable):
        missing = set(dispatchable) - set(schedule.priority_order)
        extra = set(schedule.priority_order) - set(dispatchable)
        msg = []
        if missing:
            msg.append(f"missing {sorted(missing)}")
        if extra:
            msg.append(f"unknown {sorted(extra)}")
        out.append(Violation("schedule", "permutation",
                             "priority_order is not a permutation: " + "; ".join(msg)))
    res_by_id = model.resources_by_id
    for a in model.activities:
        if a.id in context.preset_starts:
            continue  # history is authoritative, not re-validated
        crew = schedule.assignments.get(a.id, ())
        if len(crew) != a.crew_needed:
            out.append(Violation(a.id, "crew",
                                 f"needs {a.crew_needed} crew, assigned {len(crew)}"))
        bad = [c for c in crew if c not in a.eligible_crew]
        if bad:
            out.append(Violation(a.id, "crew", f"assigned ineligible crew {bad}"))
        if len(set(crew)) != len(crew):
            out.append(Violation(a.id, "crew", "duplicate crew assignment"))
        for rid, qty in _effective_resources(a, schedule).items():
            res = res_by_id.get(rid)
            if res is not None and qty > res.capacity:
                out.append(Violation(a.id, "capacity",
                                     f"needs {qty} of {rid!r}, capacity {res.capacity}"))
    pinned = schedule.pinned_starts
    if pinned:
        for c in model.constraints:
            if not c.is_precedence:
                continue
            u, v = c.from_event.activity_id, c.to_event.activity_id
            if u in pinned and v in pinned:
                u_end = pinned[u] + model.activities_by_id[u].duration.nominal()
                if pinned[v] < u_end + c.min_delay.nominal():
                    out.append(Violation("schedule", "pinned",
                                         f"pinned start of {v!r} precedes {u!r} under nominal durations"))
    return out


def _execution_intervals(calendar, activity: Activity) -> tuple[list[tuple[int, int]], int, int]:
    """Per-sol execution intervals (work windows intersected with a daily
    activity window) and the absolute [earliest_start, latest_end] bounds."""
    lo_abs, hi_abs = 0, calendar.horizon_minutes
    daily = None
    w = activity.window
    if w is not None:
        if w.kind == "absolute":
            lo_abs = max(lo_abs, w.start)
            hi_abs = min(hi_abs, w.end)
        else:
            daily = (w.start, w.end)
    intervals = []
    for ws, we in calendar.work_windows:
        s, e = ws, we
        if daily is not None:
            s, e = max(s, daily[0]), min(e, daily[1])
        if s < e:
            intervals.append((s, e))
    return intervals, lo_abs, hi_abs


def _scan_fit(intervals: list[tuple[int, int]], lo_abs: int, hi_abs: int,
              mps: int, horizon: int, t: int, dur: int) -> int | None:
    t = max(t, lo_abs)
    deadline = min(horizon, hi_abs)
    if t + dur > deadline or not intervals:
        return None
    for sol in range(t // mps, horizon // mps + 1):
        base = sol * mps
        if base > deadline:
            return None
        for lo, hi in intervals:
            s = max(t, base + lo)
            e = s + dur
            if e <= base + hi and e <= deadline:
                return s
    return None


def next_window_fit(calendar, activity: Activity, t: int, dur: int) -> int | None:
    """Earliest start >= t from which the activity fits entirely inside one
    execution window, or None if no such start remains in the horizon."""
    intervals, lo_abs, hi_abs = _execution_intervals(calendar, activity)
    return _scan_fit(intervals, lo_abs, hi_abs, calendar.minutes_per_sol,
                     calendar.horizon_minutes, t, dur)


class DispatchPlan:
    """Model + schedule compiled for repeated scenario evaluation."""

    def __init__(self, model: MissionModel, schedule: Schedule,
                 context: DispatchContext = DEFAULT_CONTEXT):
        problems = validate_schedule(model, schedule, context)
        if problems:
            raise DispatchError("; ".join(str(p) for p in problems))
        cycle = find_precedence_cycle([a.id for a in model.activities], model.constraints)
        if cycle is not None:
            raise DispatchError(f"precedence cycle through {cycle}")
        self.model = model
        self.schedule = schedule
        self.context = context
        cal = model.calendar
        self.mps = cal.minutes_per_sol
        self.horizon = cal.horizon_minutes
        self.acts = {a.id: a for a in model.activities}
        self.rank = {aid: i for i, aid in enumerate(schedule.priority_order)}

        # per-activity effective resource needs; presets use the crew that
        # actually performed them
        self.needs = {}
        for a in model.activities:
            if a.id in context.preset_starts:
                needs: dict[str, int] = {}
                for rid, qty in a.requirements:
                    needs[rid] = needs.get(rid, 0) + qty
                for crew in context.preset_assignments.get(a.id, ()):
                    needs[crew] = needs.get(crew, 0) + 1
                self.needs[a.id] = needs
            else:
                self.needs[a.id] = _effective_resources(a, schedule)

        self.sol_intervals: dict[str, list[tuple[int, int]]] = {}
        self.abs_bounds: dict[str, tuple[int, int]] = {}
        for a in model.activities:
            intervals, lo_abs, hi_abs = _execution_intervals(cal, a)
            self.sol_intervals[a.id] = intervals
            self.abs_bounds[a.id] = (lo_abs, hi_abs)

        # queue discipline: gated_by[x] lists higher-priority activities that
        # share at least one resource with x (presets excluded on both sides)
        users: dict[str, list[str]] = {}
        for aid, needs in self.needs.items():
            if aid in context.preset_starts:
                continue
            for rid in needs:
                users.setdefault(rid, []).append(aid)
        gate_pairs: set[tuple[str, str]] = set()
        for aids in users.values():
            aids.sort(key=lambda a: self.rank[a])
            for i in range(len(aids)):
                for j in range(i + 1, len(aids)):
                    gate_pairs.add((aids[i], aids[j]))
        self.gates_opened_by: dict[str, list[str]] = {aid: [] for aid in self.rank}
        self.gate_count0: dict[str, int] = {aid: 0 for aid in self.rank}
        for hi, lo in gate_pairs:
            self.gates_opened_by[hi].append(lo)
            self.gate_count0[lo] += 1

        # constraints indexed by the event that activates them; constraints
        # into an "end" anchor cannot gate a start non-clairvoyantly and are
        # checked on the finished timeline instead
        self.start_bounds_from: dict[tuple[str, str], list] = {}
        for c in model.constraints:
            if c.to_event.anchor == "start":
                key = (c.from_event.activity_id, c.from_event.anchor)
                self.start_bounds_from.setdefault(key, []).append(c)
        self.pending_bound_count: dict[str, int] = {aid: 0 for aid in self.acts}
        for cons in self.start_bounds_from.values():
            for c in cons:
                self.pending_bound_count[c.to_event.activity_id] += 1

    # -- window arithmetic -------------------------------------------------

    def next_fit(self, aid: str, t: int, dur: int) -> int | None:
        """Earliest start >= t from which [start, start+dur] fits entirely
        inside one execution window, or None if no such start exists."""
        lo_abs, hi_abs = self.abs_bounds[aid]
        return _scan_fit(self.sol_intervals[aid], lo_abs, hi_abs,
                         self.mps, self.horizon, t, dur)


def dispatch(model: MissionModel, schedule: Schedule, scenario: Scenario,
             protocol: DispatchProtocol = ASAP,
             context: DispatchContext = DEFAULT_CONTEXT,
             plan: DispatchPlan | None = None) -> ExecutionTrace:
    """Execute ``schedule`` under ``scenario``; pure and deterministic."""
    if plan is None:
        plan = DispatchPlan(model, schedule, context)
    if not scenario_complete(model, scenario):
        raise DispatchError("scenario is missing stochastic elements")
    return run_plan(plan, scenario)


def run_plan(plan: DispatchPlan, scenario: Scenario) -> ExecutionTrace:
    model = plan.model
    context = plan.context
    acts = plan.acts
    durations = {aid: scenario.duration_of(aid, a.duration) for aid, a in acts.items()}

    started: dict[str, int] = {}
    ended: dict[str, int] = {}
    free = {r.id: r.capacity for r in model.resources}
    gate_count = dict(plan.gate_count0)
    bound_missing = dict(plan.pending_bound_count)
    start_lb: dict[str, int] = {aid: context.clock_start for aid in acts}
    pending = {aid for aid in acts if aid not in context.preset_starts}
    completions: list[tuple[int, str]] = []
    preset_queue = sorted(((m, aid) for aid, m in context.preset_starts.items()),
                          key=lambda x: (x[0], x[1]))
    order = [aid for aid in plan.schedule.priority_order]

    def realize_event(aid: str, anchor: str, minute: int) -> None:
        for c in plan.start_bounds_from.get((aid, anchor), ()):
            to = c.to_event.activity_id
            delay = scenario.delay_of(c.id, c.min_delay)
            start_lb[to] = max(start_lb[to], minute + delay)
            bound_missing[to] -= 1

    def begin(aid: str, minute: int) -> None:
        started[aid] = minute
        for rid, qty in plan.needs[aid].items():
            free[rid] -= qty
        end = minute + durations[aid]
        heapq.heappush(completions, (end, aid))
        for lo in plan.gates_opened_by.get(aid, ()):
            gate_count[lo] -= 1
        realize_event(aid, "start", minute)

    def finish(aid: str, minute: int) -> None:
        ended[aid] = minute
        for rid, qty in plan.needs[aid].items():
            free[rid] += qty
        realize_event(aid, "end", minute)

    preset_idx = 0
    t = context.clock_start
    if preset_queue:
        t = min(t, preset_queue[0][0])
    while True:
        # fixpoint at instant t: replay due presets, settle due completions,
        # then keep starting pending activities in priority order
        changed = True
        while changed:
            changed = False
            while preset_idx < len(preset_queue) and preset_queue[preset_idx][0] <= t:
                m, aid = preset_queue[preset_idx]
                begin(aid, m)
                preset_idx += 1
                changed = True
            while completions and completions[0][0] <= t:
                end, aid = heapq.heappop(completions)
                finish(aid, end)
                changed = True
            for aid in order:
                if aid not in pending:
                    continue
                if gate_count[aid] > 0 or bound_missing[aid] > 0:
                    continue
                if start_lb[aid] > t:
                    continue
                fit = plan.next_fit(aid, t, durations[aid])
                if fit is None:
                    pending.discard(aid)  # permanently unschedulable
                    continue
                if fit > t:
                    continue
                if all(free[rid] >= qty for rid, qty in plan.needs[aid].items()):
                    begin(aid, t)
                    pending.discard(aid)
                    changed = True

        # next interesting instant (all strictly later than t)
        candidates: list[int] = []
        if completions:
            candidates.append(completions[0][0])
        if preset_idx < len(preset_queue):
            candidates.append(preset_queue[preset_idx][0])
        for aid in pending:
            if gate_count[aid] > 0 or bound_missing[aid] > 0:
                continue
            fit = plan.next_fit(aid, max(start_lb[aid], t), durations[aid])
            if fit is not None and fit > t:
                candidates.append(fit)
        if not candidates:
            break
        t = min(candidates)

    while completions:
        end, aid = heapq.heappop(completions)
        finish(aid, end)

    return _assemble_trace(plan, scenario, started, ended)


def _assemble_trace(plan: DispatchPlan, scenario: Scenario,
                    started: dict[str, int], ended: dict[str, int]) -> ExecutionTrace:
    model = plan.model
    mps = plan.mps
    violations: list[tuple[int, Violation]] = []

    entries: dict[str, TraceEntry | None] = {}
    for aid in plan.acts:
        if aid in started:
            entries[aid] = TraceEntry(started[aid], ended[aid])
        else:
            entries[aid] = None
            violations.append((plan.horizon, Violation(
                aid, "unscheduled", "never became executable within the horizon")))

    def event_time(aid: str, anchor: str) -> int | None:
        if anchor == "start":
            return started.get(aid)
        return ended.get(aid)

    for c in model.constraints:
        ft = event_time(c.from_event.activity_id, c.from_event.anchor)
        tt = event_time(c.to_event.activity_id, c.to_event.anchor)
        if ft is None:
            continue  # the from-activity's own unscheduled violation covers it
        delay = scenario.delay_of(c.id, c.min_delay)
        if tt is not None and tt < ft + delay:
            violations.append((tt, Violation(
                c.id, "min_delay", f"event at {tt} precedes {ft}+{delay}")))
        if c.max_delay is not None:
            deadline = ft + c.max_delay
            if tt is None or tt > deadline:
                violations.append((deadline, Violation(
                    c.id, "max_delay", f"deadline {deadline} passed")))
        if c.same_sol:
            sol_deadline = (ft // mps + 1) * mps
            if tt is None or tt // mps != ft // mps:
                violations.append((min(sol_deadline, tt if tt is not None else sol_deadline),
                                   Violation(c.id, "same_sol",
                                             f"events on different sols (from minute {ft})")))

    for aid, a in plan.acts.items():
        if a.same_sol_required and aid in started:
            # activities are atomic within a window, but a zero-length sol
            # boundary inside a custom calendar could still split them
            if started[aid] // mps != max(started[aid], ended[aid] - 1) // mps:
                violations.append((ended[aid], Violation(
                    aid, "same_sol", "activity spans a sol boundary")))
        if aid in ended and ended[aid] > plan.horizon:
            violations.append((plan.horizon, Violation(
                aid, "horizon", "activity ends after the mission horizon")))

    violations.sort(key=lambda v: (v[0], v[1].element_id))
    vio = tuple(v for _, v in violations)
    success = not vio
    return ExecutionTrace(
        entries=entries,
        success=success,
        failure_reason=str(vio[0]) if vio else None,
        violations=vio,
        first_violation_minute=violations[0][0] if violations else None,
    )


def deterministic_view(model: MissionModel, schedule: Schedule,
                       protocol: DispatchProtocol = ASAP,
                       context: DispatchContext = DEFAULT_CONTEXT) -> ExecutionTrace:
    """Dispatch under the nominal scenario (modes / stated values)."""
    return dispatch(model, schedule, nominal_scenario(model), protocol, context)


def trace_kpis(model: MissionModel, schedule: Schedule,
               trace: ExecutionTrace) -> dict[str, float]:
    """Per-trace KPI values: makespan, cost of executed activities, and the
    spread of busy minutes across crew (normalized by the horizon)."""
    crew_busy = {cid: 0 for cid in model.crew_ids}
    cost = 0.0
    for aid, entry in trace.entries.items():
        if entry is None:
            continue
        act = model.activities_by_id[aid]
        cost += act.cost
        dur = entry.end - entry.start
        for rid, qty in act.requirements:
            if rid in crew_busy:
                crew_busy[rid] += dur * qty
        for crew in schedule.assignments.get(aid, ()):
            if crew in crew_busy:
                crew_busy[crew] += dur
    balance = 0.0
    if crew_busy:
        vals = list(crew_busy.values())
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / len(vals)
        balance = var ** 0.5 / model.calendar.horizon_minutes
    return {
        "makespan": float(trace.makespan()),
        "cost": cost,
        "workload_balance": balance,
    }
