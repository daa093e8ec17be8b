"""KPI-guided local search over schedules.

The loop is the classic start / move / evaluate recipe: start from a
(possibly nominal-infeasible) schedule, perturb the priority order or the
crew assignment, estimate the candidate under common random numbers, and
accept by hill climbing or simulated annealing.  Candidates are first
screened on a small scenario prefix; only those whose screened objective is
within two standard errors of the incumbent get the full evaluation.
Nominal infeasibility is admitted with a penalty of one objective unit per
violated constraint, so searches can walk through infeasible regions.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dispatch import (
    DEFAULT_CONTEXT,
    DispatchContext,
    DispatchPlan,
    Schedule,
    deterministic_view,
    run_plan,
)
from .model import KpiWeights, MissionModel
from .robustness import (
    RobustnessEstimate,
    _aggregate,
    estimate_robustness,
    evaluate_scenarios,
)
from .scenarios import nominal_scenario, sample_scenarios

__all__ = [
    "MOVE_KINDS",
    "SearchConfig",
    "SearchResult",
    "ProgressEvent",
    "initial_solution",
    "neighbor",
    "objective",
    "optimize",
]

MOVE_KINDS = ("swap_adjacent", "relocate", "swap_any", "reassign_crew")

_DEFAULT_MOVES = {
    "swap_adjacent": 0.3,
    "relocate": 0.3,
    "swap_any": 0.3,
    "reassign_crew": 0.1,
}


@dataclass(frozen=True)
class SearchConfig:
    kpi_weights: KpiWeights = field(default_factory=KpiWeights)
    n_eval_scenarios: int = 1000
    master_seed: int = 0
    move_weights: dict[str, float] = field(default_factory=lambda: dict(_DEFAULT_MOVES))
    acceptance: str = "simulated_annealing"  # or "hill_climb"
    t0: float | None = None  # None: calibrate toward ~50% initial acceptance
    cooling_rate: float = 0.995
    max_iterations: int = 2000
    max_seconds: float | None = None
    restart_count: int = 4
    screen_fraction: float = 0.1
    workers: int = 1

    def violations(self) -> list[str]:
        out = [str(v) for v in self.kpi_weights.violations()]
        if abs(sum(self.move_weights.values()) - 1.0) > 1e-9:
            out.append("move_weights must sum to 1")
        if any(k not in MOVE_KINDS for k in self.move_weights):
            out.append("unknown move kind")
        if self.max_iterations < 0:
            out.append("max_iterations must be >= 0")
        if self.n_eval_scenarios < 1:
            out.append("n_eval_scenarios must be >= 1")
        if self.acceptance not in ("hill_climb", "simulated_annealing"):
            out.append(f"unknown acceptance rule {self.acceptance!r}")
        if self.t0 is not None and self.t0 <= 0:
            out.append("t0 must be > 0")
        if self.restart_count < 1:
            out.append("restart_count must be >= 1")
        return out


@dataclass(frozen=True)
class ProgressEvent:
    restart: int
    iteration: int
    best_objective: float
    best_p_hat: float


@dataclass(frozen=True)
class SearchResult:
    best_schedule: Schedule
    best_estimate: RobustnessEstimate  # under the winning restart's CRN set
    unbiased_estimate: RobustnessEstimate  # fresh 2n scenarios
    best_objective: float
    objective_trace: tuple[tuple[int, float], ...]  # (iteration, best objective)
    iterations_used: int
    seed: int


def _least_loaded_crew(model: MissionModel, order: list[str]) -> dict[str, tuple[str, ...]]:
    load: dict[str, float] = {cid: 0.0 for cid in model.crew_ids}
    assignments: dict[str, tuple[str, ...]] = {}
    for aid in order:
        act = model.activities_by_id[aid]
        if act.crew_needed == 0:
            continue
        ranked = sorted(act.eligible_crew, key=lambda c: (load[c], c))
        chosen = tuple(ranked[: act.crew_needed])
        for c in chosen:
            load[c] += act.duration.nominal()
        assignments[aid] = chosen
    return assignments


def initial_solution(model: MissionModel, mode: str = "serial_sgs",
                     seed: int = 0,
                     context: DispatchContext = DEFAULT_CONTEXT) -> Schedule:
    """Complete starting schedule.

    ``random_permutation`` shuffles the dispatchable activities uniformly
    (allowed to be nominal-infeasible); ``serial_sgs`` inserts activities
    one at a time at their earliest nominal start, yielding a
    topological-order-respecting schedule deterministically.
    """
    dispatchable = [a.id for a in model.activities if a.id not in context.preset_starts]
    if mode == "random_permutation":
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        order = list(dispatchable)
        rng.shuffle(order)
        return Schedule(tuple(order), _least_loaded_crew(model, order))
    if mode != "serial_sgs":
        raise ValueError(f"unknown initial solution mode {mode!r}")

    # serial generation pass: repeatedly dispatch the chosen prefix under
    # nominal durations and append the ready activity that can start soonest
    nominal = nominal_scenario(model)
    remaining = set(dispatchable)
    order = []
    preds: dict[str, set[str]] = {aid: set() for aid in dispatchable}
    for c in model.constraints:
        if c.is_precedence and c.to_event.activity_id in preds:
            if c.from_event.activity_id in remaining:
                preds[c.to_event.activity_id].add(c.from_event.activity_id)
    assignments = _least_loaded_crew(model, dispatchable)
    pinned: dict[str, int] = {}
    while remaining:
        done = set(order) | set(context.preset_starts)
        ready = sorted(a for a in remaining if preds[a] <= done)
        if not ready:  # cycle guard; validation catches this upstream
            ready = sorted(remaining)
        best_aid, best_start = None, None
        for aid in ready:
            trial = order + [aid]
            sub = _submodel(model, set(trial) | set(context.preset_starts))
            sched = Schedule(tuple(trial), {a: assignments[a] for a in trial if a in assignments})
            trace = run_plan(DispatchPlan(sub, sched, context), nominal)
            entry = trace.entries.get(aid)
            start = entry.start if entry is not None else math.inf
            if best_start is None or (start, aid) < (best_start, best_aid):
                best_aid, best_start = aid, start
        order.append(best_aid)
        remaining.discard(best_aid)
        if best_start is not None and best_start is not math.inf:
            pinned[best_aid] = int(best_start)
    return Schedule(tuple(order),
                    {a: assignments[a] for a in order if a in assignments},
                    pinned)


def _submodel(model: MissionModel, keep: set[str]) -> MissionModel:
    return MissionModel(
        calendar=model.calendar, resources=model.resources,
        activities=tuple(a for a in model.activities if a.id in keep),
        constraints=tuple(c for c in model.constraints
                          if c.from_event.activity_id in keep
                          and c.to_event.activity_id in keep),
        project_ids=model.project_ids, priority_weights=model.priority_weights)


def neighbor(model: MissionModel, schedule: Schedule, move_kind: str,
             rng: np.random.Generator) -> Schedule | None:
    """One structural change; returns None when the move is inapplicable so
    the caller can redraw.  The input schedule is never mutated."""
    order = list(schedule.priority_order)
    n = len(order)
    if move_kind == "swap_adjacent":
        if n < 2:
            return None
        i = int(rng.integers(0, n - 1))
        order[i], order[i + 1] = order[i + 1], order[i]
        return Schedule(tuple(order), schedule.assignments)
    if move_kind == "swap_any":
        if n < 2:
            return None
        i, j = sorted(rng.choice(n, size=2, replace=False).tolist())
        order[i], order[j] = order[j], order[i]
        return Schedule(tuple(order), schedule.assignments)
    if move_kind == "relocate":
        if n < 2:
            return None
        i = int(rng.integers(0, n))
        j = int(rng.integers(0, n - 1))
        if j >= i:
            j += 1
        aid = order.pop(i)
        order.insert(j, aid)
        return Schedule(tuple(order), schedule.assignments)
    if move_kind == "reassign_crew":
        flexible = [a for a in model.activities
                    if a.crew_needed > 0 and len(a.eligible_crew) > a.crew_needed
                    and a.id in schedule.assignments]
        if not flexible:
            return None
        act = flexible[int(rng.integers(0, len(flexible)))]
        current = list(schedule.assignments[act.id])
        spare = sorted(act.eligible_crew - set(current))
        out_idx = int(rng.integers(0, len(current)))
        incoming = spare[int(rng.integers(0, len(spare)))]
        current[out_idx] = incoming
        assignments = dict(schedule.assignments)
        assignments[act.id] = tuple(current)
        return Schedule(schedule.priority_order, assignments)
    raise ValueError(f"unknown move kind {move_kind!r}")


def objective(estimate: RobustnessEstimate, weights: KpiWeights,
              horizon_minutes: int = 1) -> float:
    """Scalarized objective, lower is better: weighted failure probability
    plus normalized expected KPIs (makespan by horizon, cost by the declared
    cost scale).  When no scenario succeeded the conditional KPIs are
    undefined and count at their normalized worst case of 1."""
    total = weights.w_success * (1.0 - estimate.p_hat)
    for name, w, scale in (
        ("makespan", weights.w_expected_makespan, float(horizon_minutes)),
        ("cost", weights.w_expected_cost, weights.cost_scale),
        ("workload_balance", weights.w_workload_balance, 1.0),
    ):
        if w == 0:
            continue
        k = estimate.kpis.get(name)
        total += w * (k.mean / scale if k is not None else 1.0)
    return total


def _objective_sigma(estimate: RobustnessEstimate, weights: KpiWeights,
                     horizon_minutes: int) -> float:
    parts = [(weights.w_success * estimate.std_error) ** 2]
    for name, w, scale in (
        ("makespan", weights.w_expected_makespan, float(horizon_minutes)),
        ("cost", weights.w_expected_cost, weights.cost_scale),
        ("workload_balance", weights.w_workload_balance, 1.0),
    ):
        k = estimate.kpis.get(name)
        if w and k is not None:
            parts.append((w * k.std_error / scale) ** 2)
    return math.sqrt(sum(parts))


def _nominal_penalty(model: MissionModel, schedule: Schedule,
                     context: DispatchContext) -> int:
    return len(deterministic_view(model, schedule, context=context).violations)


def _derive_seed(master_seed: int, stream: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(stream,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def optimize(model: MissionModel, start: Schedule | None, config: SearchConfig,
             cancel_signal: threading.Event | None = None, *,
             context: DispatchContext = DEFAULT_CONTEXT,
             on_progress: Callable[[ProgressEvent], None] | None = None) -> SearchResult:
    """Run the search and return the best schedule encountered.

    Deterministic given (model, start, config): restarts draw their own
    seeds from ``config.master_seed``, every candidate within a restart is
    evaluated on that restart's fixed scenario set (common random numbers),
    and worker count never changes results.  The returned best is
    re-evaluated on a fresh scenario set twice the configured size.
    """
    problems = config.violations()
    if problems:
        raise ValueError("; ".join(problems))
    weights = config.kpi_weights
    horizon = model.calendar.horizon_minutes
    n_full = config.n_eval_scenarios
    n_screen = max(1, int(n_full * config.screen_fraction))
    deadline = None if config.max_seconds is None else time.monotonic() + config.max_seconds
    move_kinds = [k for k, w in sorted(config.move_weights.items()) if w > 0]
    move_probs = np.array([config.move_weights[k] for k in move_kinds], dtype=float)
    move_probs /= move_probs.sum()

    nominal = nominal_scenario(model)

    def penalty_of(plan: DispatchPlan) -> int:
        return len(run_plan(plan, nominal).violations)

    best_sched: Schedule | None = None
    best_est: RobustnessEstimate | None = None
    best_obj = math.inf
    trace: list[tuple[int, float]] = []
    iterations_used = 0
    global_iter = 0

    def note_best(restart: int, sched: Schedule, est: RobustnessEstimate, obj: float) -> None:
        nonlocal best_sched, best_est, best_obj
        if obj < best_obj or best_sched is None:
            best_sched, best_est, best_obj = sched, est, obj
            trace.append((global_iter, obj))
            if on_progress:
                on_progress(ProgressEvent(restart, global_iter, obj, est.p_hat))

    restart_count = 1 if config.max_iterations == 0 else config.restart_count
    for restart in range(restart_count):
        rng = np.random.default_rng(np.random.SeedSequence(config.master_seed, spawn_key=(restart,)))
        scen_seed = _derive_seed(config.master_seed, restart)
        # one fixed scenario set per restart: every candidate inside this
        # restart is compared on the identical draws (common random numbers)
        scenarios = sample_scenarios(model, scen_seed, 0, n_full)

        def full_eval(schedule: Schedule) -> tuple[RobustnessEstimate, float]:
            plan = DispatchPlan(model, schedule, context)
            results = evaluate_scenarios(plan, scenarios, config.workers)
            est = _aggregate(results, scen_seed)
            return est, objective(est, weights, horizon) + penalty_of(plan)

        if start is not None and restart == 0:
            current = start
        else:
            current = initial_solution(model, "random_permutation",
                                       seed=_derive_seed(config.master_seed, 1000 + restart),
                                       context=context)
        cur_est, cur_obj = full_eval(current)
        local_best = cur_obj
        note_best(restart, current, cur_est, cur_obj)

        temp = config.t0
        deltas: list[float] = []
        calibrating = config.t0 is None and config.acceptance == "simulated_annealing"

        it = 0
        while it < config.max_iterations:
            if cancel_signal is not None and cancel_signal.is_set():
                break
            if deadline is not None and time.monotonic() > deadline:
                break
            it += 1
            global_iter += 1
            iterations_used += 1
            kind = move_kinds[int(rng.choice(len(move_kinds), p=move_probs))]
            cand = neighbor(model, current, kind, rng)
            if cand is None:
                continue
            plan = DispatchPlan(model, cand, context)
            pen = penalty_of(plan)
            scr_results = evaluate_scenarios(plan, scenarios[:n_screen], config.workers)
            scr_est = _aggregate(scr_results, scen_seed)
            scr_obj = objective(scr_est, weights, horizon) + pen
            scr_sig = _objective_sigma(scr_est, weights, horizon)
            if scr_obj - 2.0 * scr_sig > min(cur_obj, local_best) and n_screen < n_full:
                continue  # screened out
            if n_screen < n_full:
                rest = evaluate_scenarios(plan, scenarios[n_screen:], config.workers)
                cand_est = _aggregate(scr_results + rest, scen_seed)
                cand_obj = objective(cand_est, weights, horizon) + pen
            else:
                cand_est, cand_obj = scr_est, scr_obj
            delta = cand_obj - cur_obj
            if calibrating:
                deltas.append(abs(delta))
                if len(deltas) >= 10:
                    positive = [d for d in deltas if d > 0]
                    base = float(np.median(positive)) if positive else 0.0
                    temp = max(base / math.log(2.0), 1e-6)
                    calibrating = False
            accept = delta < 0
            if not accept and config.acceptance == "simulated_annealing":
                t_now = temp if temp is not None else math.inf
                accept = delta == 0 or rng.random() < math.exp(-delta / max(t_now, 1e-12))
            if temp is not None:
                temp *= config.cooling_rate
            if accept:
                current, cur_est, cur_obj = cand, cand_est, cand_obj
                if cand_obj < local_best:
                    local_best = cand_obj
                note_best(restart, cand, cand_est, cand_obj)

        if cancel_signal is not None and cancel_signal.is_set():
            break
        if deadline is not None and time.monotonic() > deadline:
            break

    assert best_sched is not None and best_est is not None
    final_seed = _derive_seed(config.master_seed, 1 << 30)
    final_est = estimate_robustness(model, best_sched, n=2 * n_full,
                                    master_seed=final_seed, workers=config.workers,
                                    context=context)
    return SearchResult(
        best_schedule=best_sched,
        best_estimate=best_est,
        unbiased_estimate=final_est,
        best_objective=best_obj,
        objective_trace=tuple(trace),
        iterations_used=iterations_used,
        seed=config.master_seed,
    )


def config_to_doc(config: SearchConfig) -> dict:
    from .modelio import kpi_weights_to_doc
    return {
        "kpi_weights": kpi_weights_to_doc(config.kpi_weights),
        "n_eval_scenarios": config.n_eval_scenarios,
        "master_seed": config.master_seed,
        "move_weights": dict(sorted(config.move_weights.items())),
        "acceptance": config.acceptance,
        "t0": config.t0,
        "cooling_rate": config.cooling_rate,
        "max_iterations": config.max_iterations,
        "max_seconds": config.max_seconds,
        "restart_count": config.restart_count,
        "screen_fraction": config.screen_fraction,
        "workers": config.workers,
    }


def config_from_doc(doc: dict) -> SearchConfig:
    from .modelio import kpi_weights_from_doc
    base = SearchConfig()
    return SearchConfig(
        kpi_weights=kpi_weights_from_doc(doc.get("kpi_weights", {})),
        n_eval_scenarios=int(doc.get("n_eval_scenarios", base.n_eval_scenarios)),
        master_seed=int(doc.get("master_seed", base.master_seed)),
        move_weights=dict(doc.get("move_weights", base.move_weights)),
        acceptance=doc.get("acceptance", base.acceptance),
        t0=doc.get("t0"),
        cooling_rate=float(doc.get("cooling_rate", base.cooling_rate)),
        max_iterations=int(doc.get("max_iterations", base.max_iterations)),
        max_seconds=doc.get("max_seconds"),
        restart_count=int(doc.get("restart_count", base.restart_count)),
        screen_fraction=float(doc.get("screen_fraction", base.screen_fraction)),
        workers=int(doc.get("workers", base.workers)),
    )
