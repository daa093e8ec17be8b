"""Domain model: mission calendar, resources, activities, temporal constraints.

Time is measured in integer minutes.  Absolute time for a mission is
``sol_index * calendar.minutes_per_sol + minute_of_sol``; every event in the
system lives on this single axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

__all__ = [
    "ResourceKind",
    "MissionCalendar",
    "Resource",
    "DurationModel",
    "ActivityWindow",
    "Activity",
    "EventRef",
    "TemporalConstraint",
    "ProjectModel",
    "KpiWeights",
    "MissionModel",
    "Violation",
    "ValidationReport",
    "MergeError",
    "validate_model",
    "validate_mission",
    "merge_mission",
    "mission_from_project",
]

PROB_TOL = 1e-9


class ResourceKind(str, Enum):
    CREW_MEMBER = "crew_member"
    EQUIPMENT = "equipment"


@dataclass(frozen=True)
class MissionCalendar:
    """Sol-structured mission timeline.

    ``work_windows`` is the list of (start_minute, end_minute) pairs, in
    minutes from sol midnight, during which activities may execute; the same
    windows apply on every sol of the horizon.
    """

    horizon_sols: int
    work_windows: tuple[tuple[int, int], ...] = ((0, 1440),)
    minutes_per_sol: int = 1440

    def __post_init__(self) -> None:
        object.__setattr__(self, "work_windows", tuple(tuple(w) for w in self.work_windows))

    @property
    def horizon_minutes(self) -> int:
        return self.horizon_sols * self.minutes_per_sol

    def sol_of(self, minute: int) -> int:
        return minute // self.minutes_per_sol

    def violations(self) -> list[Violation]:
        out = []
        if self.horizon_sols < 1:
            out.append(Violation("calendar", "calendar", "horizon_sols must be >= 1"))
        if self.minutes_per_sol < 1:
            out.append(Violation("calendar", "calendar", "minutes_per_sol must be >= 1"))
        prev_end = -1
        for s, e in self.work_windows:
            if not (0 <= s < e <= self.minutes_per_sol):
                out.append(Violation("calendar", "calendar", f"bad work window ({s}, {e})"))
            elif s <= prev_end:
                out.append(Violation("calendar", "calendar", "work windows must be sorted and disjoint"))
            prev_end = e
        return out


@dataclass(frozen=True)
class Resource:
    id: str
    kind: ResourceKind = ResourceKind.EQUIPMENT
    capacity: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ResourceKind(self.kind))


@dataclass(frozen=True)
class DurationModel:
    """Duration (or inter-activity delay) in minutes.

    Kinds:
      * ``deterministic`` -- fixed ``value``.
      * ``modified_pert`` -- Beta-shaped density on [min, max] with the given
        mode and shape ``lam``; sampled values are rounded to whole minutes.
      * ``discrete`` -- explicit (value, probability) support; this is the
        representation used for stochastic inter-activity delays and for
        instances meant to be solved exactly by enumeration.

    ``min_clip``, when set, conditions the distribution on the outcome being
    strictly greater than that many minutes (used when re-planning around an
    activity that is already running).
    """

    kind: str
    value: int | None = None
    min: int | None = None
    mode: int | None = None
    max: int | None = None
    lam: float = 4.0
    values: tuple[tuple[int, float], ...] | None = None
    min_clip: int | None = None

    @classmethod
    def fixed(cls, minutes: int) -> DurationModel:
        return cls(kind="deterministic", value=int(minutes))

    @classmethod
    def pert(cls, min: int, mode: int, max: int, lam: float = 4.0) -> DurationModel:
        return cls(kind="modified_pert", min=int(min), mode=int(mode), max=int(max), lam=float(lam))

    @classmethod
    def choice(cls, values: Iterable[tuple[int, float]]) -> DurationModel:
        vals = tuple((int(v), float(p)) for v, p in values)
        return cls(kind="discrete", values=vals)

    @property
    def is_stochastic(self) -> bool:
        if self.kind == "deterministic":
            return False
        if self.kind == "discrete":
            return len(self.values or ()) > 1
        return self.min != self.max

    def nominal(self) -> int:
        """Nominal realization: the stated value, the mode, or for discrete
        supports the highest-probability value (ties broken toward the
        smallest value)."""
        if self.kind == "deterministic":
            return self.value  # type: ignore[return-value]
        if self.kind == "modified_pert":
            return self.mode  # type: ignore[return-value]
        best = max(self.values, key=lambda vp: (vp[1], -vp[0]))  # type: ignore[arg-type]
        return best[0]

    def bounds(self) -> tuple[int, int]:
        if self.kind == "deterministic":
            return (self.value, self.value)  # type: ignore[return-value]
        if self.kind == "modified_pert":
            lo = self.min if self.min_clip is None else max(self.min, self.min_clip)
            return (lo, self.max)  # type: ignore[return-value]
        vals = [v for v, _ in self.values]  # type: ignore[union-attr]
        return (min(vals), max(vals))

    def mean(self) -> float:
        """Exact mean of the distribution (before rounding to minutes)."""
        if self.kind == "deterministic":
            return float(self.value)  # type: ignore[arg-type]
        if self.kind == "modified_pert":
            if self.min_clip is not None:
                raise ValueError("mean of a clipped PERT is not closed-form")
            return (self.min + self.lam * self.mode + self.max) / (self.lam + 2.0)  # type: ignore[operator]
        return sum(v * p for v, p in self.values)  # type: ignore[union-attr]

    def violations(self, owner: str) -> list[Violation]:
        out = []
        if self.kind == "deterministic":
            if self.value is None or self.value < 0:
                out.append(Violation(owner, "duration", "deterministic value must be >= 0"))
        elif self.kind == "modified_pert":
            if None in (self.min, self.mode, self.max):
                out.append(Violation(owner, "duration", "modified_pert needs min, mode, max"))
            elif not (0 <= self.min <= self.mode <= self.max):
                out.append(Violation(owner, "duration", "need 0 <= min <= mode <= max"))
            if self.lam <= 0:
                out.append(Violation(owner, "duration", "shape lam must be > 0"))
        elif self.kind == "discrete":
            if not self.values:
                out.append(Violation(owner, "duration", "discrete support is empty"))
            else:
                if any(p <= 0 for _, p in self.values):
                    out.append(Violation(owner, "duration", "discrete probabilities must be positive"))
                if any(v < 0 for v, _ in self.values):
                    out.append(Violation(owner, "duration", "discrete values must be >= 0"))
                if abs(sum(p for _, p in self.values) - 1.0) > PROB_TOL:
                    out.append(Violation(owner, "duration", "discrete probabilities must sum to 1"))
                if len({v for v, _ in self.values}) != len(self.values):
                    out.append(Violation(owner, "duration", "discrete values must be distinct"))
        else:
            out.append(Violation(owner, "duration", f"unknown duration kind {self.kind!r}"))
        return out


@dataclass(frozen=True)
class ActivityWindow:
    """Execution window restriction.

    ``absolute`` restricts the activity to [earliest_start, latest_end] in
    absolute mission minutes; ``daily`` restricts it to the given
    [start_minute, end_minute] interval of every sol.
    """

    kind: str  # "absolute" | "daily"
    start: int
    end: int


@dataclass(frozen=True)
class Activity:
    id: str
    project_id: str = ""
    duration: DurationModel = field(default_factory=lambda: DurationModel.fixed(0))
    requirements: tuple[tuple[str, int], ...] = ()
    eligible_crew: frozenset[str] = frozenset()
    crew_needed: int = 0
    window: ActivityWindow | None = None
    same_sol_required: bool = False
    cost: float = 0.0
    quality: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "requirements", tuple((r, int(q)) for r, q in self.requirements))
        object.__setattr__(self, "eligible_crew", frozenset(self.eligible_crew))
        if self.crew_needed == 0 and self.eligible_crew:
            object.__setattr__(self, "crew_needed", 1)


@dataclass(frozen=True)
class EventRef:
    """One endpoint of a temporal constraint: an activity start or end."""

    activity_id: str
    anchor: str  # "start" | "end"

    def __post_init__(self) -> None:
        if self.anchor not in ("start", "end"):
            raise ValueError(f"bad anchor {self.anchor!r}")


def _as_event(ev) -> EventRef:
    if isinstance(ev, EventRef):
        return ev
    return EventRef(*ev)


@dataclass(frozen=True)
class TemporalConstraint:
    """time(to_event) must fall in [time(from_event) + min_delay,
    time(from_event) + max_delay]; ``same_sol`` additionally forces both
    event times onto the same sol.

    ``min_delay`` may be stochastic (a DurationModel); ``max_delay`` is a
    fixed number of minutes or None for unbounded.
    """

    from_event: EventRef
    to_event: EventRef
    min_delay: DurationModel = field(default_factory=lambda: DurationModel.fixed(0))
    max_delay: int | None = None
    same_sol: bool = False
    id: str = ""
    cross_project: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "from_event", _as_event(self.from_event))
        object.__setattr__(self, "to_event", _as_event(self.to_event))
        if isinstance(self.min_delay, (int, float)):
            object.__setattr__(self, "min_delay", DurationModel.fixed(int(self.min_delay)))

    @property
    def is_precedence(self) -> bool:
        """True for end->start edges, the subgraph that must stay acyclic."""
        return self.from_event.anchor == "end" and self.to_event.anchor == "start"


@dataclass(frozen=True)
class ProjectModel:
    id: str
    name: str = ""
    activities: tuple[Activity, ...] = ()
    constraints: tuple[TemporalConstraint, ...] = ()
    priority_weight: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "activities", tuple(self.activities))
        constraints = []
        for i, c in enumerate(self.constraints):
            if not c.id:
                c = replace(c, id=f"c{i:03d}")
            constraints.append(c)
        object.__setattr__(self, "constraints", tuple(constraints))


@dataclass(frozen=True)
class KpiWeights:
    """Weights of the scalarized objective; all must be >= 0 and at least one
    positive.  ``w_workload_balance`` weighs the spread of busy time across
    crew members (a wellness proxy)."""

    w_success: float = 1.0
    w_expected_makespan: float = 0.0
    w_expected_cost: float = 0.0
    w_workload_balance: float = 0.0
    cost_scale: float = 1.0

    def violations(self) -> list[Violation]:
        out = []
        ws = (self.w_success, self.w_expected_makespan, self.w_expected_cost, self.w_workload_balance)
        if any(w < 0 for w in ws):
            out.append(Violation("kpi_weights", "kpi_weights", "weights must be >= 0"))
        if all(w == 0 for w in ws):
            out.append(Violation("kpi_weights", "kpi_weights", "at least one weight must be > 0"))
        if self.cost_scale <= 0:
            out.append(Violation("kpi_weights", "kpi_weights", "cost_scale must be > 0"))
        return out


@dataclass(frozen=True)
class MissionModel:
    """Flattened multi-project network sharing one calendar and resource set.

    Activity and constraint ids are mission-unique (namespaced as
    ``project_id:activity_id`` by :func:`merge_mission`)."""

    calendar: MissionCalendar
    resources: tuple[Resource, ...]
    activities: tuple[Activity, ...]
    constraints: tuple[TemporalConstraint, ...]
    project_ids: tuple[str, ...] = ()
    priority_weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "resources", tuple(self.resources))
        object.__setattr__(self, "activities", tuple(self.activities))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "priority_weights", dict(self.priority_weights))

    @property
    def activity_ids(self) -> list[str]:
        return [a.id for a in self.activities]

    def activity(self, aid: str) -> Activity:
        return self.activities_by_id[aid]

    @property
    def activities_by_id(self) -> dict[str, Activity]:
        d = self.__dict__.get("_act_by_id")
        if d is None:
            d = {a.id: a for a in self.activities}
            self.__dict__["_act_by_id"] = d
        return d

    @property
    def resources_by_id(self) -> dict[str, Resource]:
        d = self.__dict__.get("_res_by_id")
        if d is None:
            d = {r.id: r for r in self.resources}
            self.__dict__["_res_by_id"] = d
        return d

    @property
    def crew_ids(self) -> list[str]:
        return [r.id for r in self.resources if r.kind is ResourceKind.CREW_MEMBER]


@dataclass(frozen=True)
class Violation:
    element_id: str
    category: str
    message: str

    def __str__(self) -> str:
        return f"[{self.category}] {self.element_id}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.valid

    def __str__(self) -> str:
        if self.valid:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


class MergeError(ValueError):
    """Raised by merge_mission on structural errors (duplicate project ids,
    dangling cross-project endpoints)."""


def find_precedence_cycle(activity_ids: Iterable[str],
                          constraints: Iterable[TemporalConstraint]) -> list[str] | None:
    """Return the activities of one cycle in the end->start precedence
    subgraph, or None.  Kahn's algorithm, O(V+E)."""
    ids = list(activity_ids)
    known = set(ids)
    succ: dict[str, list[str]] = {a: [] for a in ids}
    indeg = {a: 0 for a in ids}
    for c in constraints:
        if not c.is_precedence:
            continue
        u, v = c.from_event.activity_id, c.to_event.activity_id
        if u in known and v in known:
            succ[u].append(v)
            indeg[v] += 1
    queue = [a for a in ids if indeg[a] == 0]
    seen = 0
    while queue:
        u = queue.pop()
        seen += 1
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    if seen == len(ids):
        return None
    return sorted(a for a in ids if indeg[a] > 0)


def _validate_network(activities: tuple[Activity, ...],
                      constraints: tuple[TemporalConstraint, ...],
                      resources_by_id: dict[str, Resource],
                      calendar: MissionCalendar,
                      allow_cross_project: bool) -> list[Violation]:
    out: list[Violation] = []
    seen_ids: set[str] = set()
    for a in activities:
        if a.id in seen_ids:
            out.append(Violation(a.id, "identity", "duplicate activity id"))
        seen_ids.add(a.id)
        out.extend(a.duration.violations(a.id))
        for rid, qty in a.requirements:
            res = resources_by_id.get(rid)
            if res is None:
                out.append(Violation(a.id, "resource", f"unknown resource {rid!r}"))
            elif qty < 1:
                out.append(Violation(a.id, "resource", f"quantity for {rid!r} must be >= 1"))
            elif qty > res.capacity:
                out.append(Violation(
                    a.id, "capacity",
                    f"requires {qty} of {rid!r} but capacity is {res.capacity}"))
        for cid in a.eligible_crew:
            res = resources_by_id.get(cid)
            if res is None:
                out.append(Violation(a.id, "resource", f"unknown crew resource {cid!r}"))
            elif res.kind is not ResourceKind.CREW_MEMBER:
                out.append(Violation(a.id, "resource", f"eligible_crew entry {cid!r} is not crew"))
        if a.crew_needed > 0 and not a.eligible_crew:
            out.append(Violation(a.id, "crew", "crew_needed > 0 but eligible_crew is empty"))
        if a.crew_needed > len(a.eligible_crew):
            out.append(Violation(a.id, "crew", "crew_needed exceeds eligible_crew size"))
        if a.window is not None:
            w = a.window
            if w.kind not in ("absolute", "daily"):
                out.append(Violation(a.id, "window", f"unknown window kind {w.kind!r}"))
            elif w.start >= w.end:
                out.append(Violation(a.id, "window", "window start must be < end"))
            elif w.kind == "daily" and not (0 <= w.start < w.end <= calendar.minutes_per_sol):
                out.append(Violation(a.id, "window", "daily window outside the sol"))

    seen_cids: set[str] = set()
    for c in constraints:
        if c.id in seen_cids:
            out.append(Violation(c.id, "identity", "duplicate constraint id"))
        seen_cids.add(c.id)
        for ev in (c.from_event, c.to_event):
            if ev.activity_id not in seen_ids:
                if c.cross_project and allow_cross_project:
                    continue  # resolved at merge time
                out.append(Violation(c.id, "reference", f"unknown activity {ev.activity_id!r}"))
        out.extend(c.min_delay.violations(c.id))
        if c.min_delay.bounds()[0] < 0:
            out.append(Violation(c.id, "delay", "min_delay must be >= 0"))
        if c.max_delay is not None and c.max_delay < c.min_delay.bounds()[1]:
            out.append(Violation(c.id, "delay", "max_delay below min_delay"))
        if (c.from_event.activity_id == c.to_event.activity_id and not c.same_sol
                and c.min_delay.bounds() == (0, 0) and c.max_delay is None):
            out.append(Violation(c.id, "degenerate", "constraint relates an activity to itself with no effect"))

    cycle = find_precedence_cycle([a.id for a in activities],
                                  [c for c in constraints
                                   if c.from_event.activity_id in seen_ids
                                   and c.to_event.activity_id in seen_ids])
    if cycle is not None:
        out.append(Violation(",".join(cycle), "cycle", "precedence constraints form a cycle"))
    return out


def validate_model(model: ProjectModel, calendar: MissionCalendar,
                   resources: Iterable[Resource] = ()) -> ValidationReport:
    """Check every invariant of one project; violations are data, not errors."""
    res_by_id = {r.id: r for r in resources}
    out = list(calendar.violations())
    if model.priority_weight < 0:
        out.append(Violation(model.id, "project", "priority_weight must be >= 0"))
    ids = [r.id for r in resources]
    if len(set(ids)) != len(ids):
        out.append(Violation("resources", "identity", "duplicate resource id"))
    for r in resources:
        if r.capacity < 1:
            out.append(Violation(r.id, "capacity", "capacity must be >= 1"))
    out.extend(_validate_network(model.activities, model.constraints, res_by_id,
                                 calendar, allow_cross_project=True))
    return ValidationReport(tuple(out))


def validate_mission(mission: MissionModel) -> ValidationReport:
    out = list(mission.calendar.violations())
    for r in mission.resources:
        if r.capacity < 1:
            out.append(Violation(r.id, "capacity", "capacity must be >= 1"))
    ids = [r.id for r in mission.resources]
    if len(set(ids)) != len(ids):
        out.append(Violation("resources", "identity", "duplicate resource id"))
    out.extend(_validate_network(mission.activities, mission.constraints,
                                 mission.resources_by_id, mission.calendar,
                                 allow_cross_project=False))
    return ValidationReport(tuple(out))


def _namespace(project_id: str, local_id: str) -> str:
    return local_id if ":" in local_id else f"{project_id}:{local_id}"


def merge_mission(models: Iterable[ProjectModel], shared: Iterable[Resource],
                  calendar: MissionCalendar) -> MissionModel:
    """Flatten valid projects into one mission network.

    Activity and constraint ids are namespaced ``project:activity``; resource
    ids stay global so cross-project contention is preserved.  Constraint
    endpoints already containing ':' are cross-project references and must
    resolve after the merge.
    """
    models = list(models)
    shared = list(shared)
    seen_projects: set[str] = set()
    activities: list[Activity] = []
    constraints: list[TemporalConstraint] = []
    weights: dict[str, float] = {}
    for m in models:
        if m.id in seen_projects:
            raise MergeError(f"duplicate project id {m.id!r}")
        seen_projects.add(m.id)
        weights[m.id] = m.priority_weight
        for a in m.activities:
            activities.append(replace(a, id=_namespace(m.id, a.id), project_id=m.id))
        for c in m.constraints:
            constraints.append(replace(
                c,
                id=_namespace(m.id, c.id),
                from_event=EventRef(_namespace(m.id, c.from_event.activity_id), c.from_event.anchor),
                to_event=EventRef(_namespace(m.id, c.to_event.activity_id), c.to_event.anchor),
            ))
    known = {a.id for a in activities}
    for c in constraints:
        for ev in (c.from_event, c.to_event):
            if ev.activity_id not in known:
                raise MergeError(f"constraint {c.id!r} references unknown activity {ev.activity_id!r}")
    return MissionModel(
        calendar=calendar,
        resources=tuple(shared),
        activities=tuple(activities),
        constraints=tuple(constraints),
        project_ids=tuple(m.id for m in models),
        priority_weights=weights,
    )


def mission_from_project(model: ProjectModel, resources: Iterable[Resource],
                         calendar: MissionCalendar) -> MissionModel:
    """Single-project mission, ids namespaced the same way as a real merge."""
    return merge_mission([model], resources, calendar)
