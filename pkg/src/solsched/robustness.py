"""Success-probability estimation and exact computation for a schedule.

``exact_robustness`` sums success over the enumerated scenario support
(all-discrete instances only); ``estimate_robustness`` is the sample
average approximation over counter-based scenario streams, reproducible
from ``(master_seed, scenario index)`` and independent of worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dispatch import (
    ASAP,
    DEFAULT_CONTEXT,
    DispatchContext,
    DispatchPlan,
    DispatchProtocol,
    Schedule,
    run_plan,
    trace_kpis,
)
from .model import MissionModel
from .scenarios import ENUMERATION_CAP, enumerate_scenarios, sample_scenarios

__all__ = [
    "KpiEstimate",
    "RobustnessEstimate",
    "ScheduleComparison",
    "ComparisonEntry",
    "estimate_robustness",
    "exact_robustness",
    "compare_schedules",
]

Z95 = 1.959963984540054


@dataclass(frozen=True)
class KpiEstimate:
    mean: float
    std_error: float


@dataclass(frozen=True)
class RobustnessEstimate:
    """SAA result: p_hat with its binomial standard error and 95% interval,
    plus expected KPIs conditional on mission success (failed scenarios have
    no meaningful makespan, so p_fail is reported separately and
    p_hat + p_fail == 1)."""

    p_hat: float
    n_samples: int
    std_error: float
    ci95: tuple[float, float]
    kpis: dict[str, KpiEstimate] = field(default_factory=dict)
    master_seed: int = 0

    @property
    def p_fail(self) -> float:
        return 1.0 - self.p_hat


def _ci95(p: float, n: int) -> tuple[float, float]:
    if n <= 0:
        return (0.0, 1.0)
    if 0.0 < p < 1.0:
        half = Z95 * math.sqrt(p * (1.0 - p) / n)
        return (max(0.0, p - half), min(1.0, p + half))
    # Wilson interval handles the degenerate estimates
    z2 = Z95 * Z95
    center = (p + z2 / (2 * n)) / (1 + z2 / n)
    half = (Z95 / (1 + z2 / n)) * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


def _scenario_key(sc) -> tuple:
    return (tuple(sorted(sc.realized.items())),
            tuple(sorted(sc.realized_delays.items())))


def _evaluate_block(plan: DispatchPlan, scenarios) -> list[tuple[bool, float, float, float]]:
    # dispatch is a pure function of (plan, realized values), so results are
    # memoized per distinct realization; on all-discrete instances this
    # collapses an SAA run to one dispatch per support point
    cache = plan.__dict__.setdefault("_result_cache", {})
    out = []
    for sc in scenarios:
        key = _scenario_key(sc)
        hit = cache.get(key)
        if hit is None:
            trace = run_plan(plan, sc)
            k = trace_kpis(plan.model, plan.schedule, trace)
            hit = (trace.success, k["makespan"], k["cost"], k["workload_balance"])
            cache[key] = hit
        out.append(hit)
    return out


def evaluate_scenarios(plan: DispatchPlan, scenarios,
                       workers: int = 1) -> list[tuple[bool, float, float, float]]:
    """Per-scenario (success, makespan, cost, balance) tuples in scenario
    order, independent of worker count."""
    n = len(scenarios)
    if workers <= 1 or n < 64:
        return _evaluate_block(plan, scenarios)
    chunk = max(16, -(-n // workers))
    blocks = [scenarios[i:i + chunk] for i in range(0, n, chunk)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda b: _evaluate_block(plan, b), blocks))
    return [r for part in parts for r in part]


def _aggregate(results: list[tuple[bool, float, float, float]],
               master_seed: int) -> RobustnessEstimate:
    n = len(results)
    wins = sum(1 for r in results if r[0])
    p = wins / n if n else 0.0
    se = math.sqrt(p * (1.0 - p) / n) if n else 0.0
    kpis: dict[str, KpiEstimate] = {}
    ok = [r for r in results if r[0]]
    if ok:
        for idx, name in ((1, "makespan"), (2, "cost"), (3, "workload_balance")):
            vals = np.array([r[idx] for r in ok], dtype=float)
            kse = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
            kpis[name] = KpiEstimate(float(vals.mean()), kse)
    return RobustnessEstimate(
        p_hat=p, n_samples=n, std_error=se, ci95=_ci95(p, n),
        kpis=kpis, master_seed=master_seed)


def estimate_robustness(model: MissionModel, schedule: Schedule,
                        protocol: DispatchProtocol = ASAP,
                        n: int = 1000, master_seed: int = 0, *,
                        workers: int = 1,
                        scenario_start: int = 0,
                        context: DispatchContext = DEFAULT_CONTEXT,
                        plan: DispatchPlan | None = None) -> RobustnessEstimate:
    """Estimate success probability over scenarios
    [scenario_start, scenario_start + n) of the master_seed stream family.

    Results are aggregated in scenario-index order, so the estimate is
    bit-identical for any worker count.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if plan is None:
        plan = DispatchPlan(model, schedule, context)
    scenarios = sample_scenarios(model, master_seed, scenario_start, scenario_start + n)
    results = evaluate_scenarios(plan, scenarios, workers)
    return _aggregate(results, master_seed)


def exact_robustness(model: MissionModel, schedule: Schedule,
                     protocol: DispatchProtocol = ASAP, *,
                     cap: int = ENUMERATION_CAP,
                     context: DispatchContext = DEFAULT_CONTEXT) -> float:
    """Exact success probability over the full scenario support.

    The result is the correctly-rounded float sum of ``probability * success``
    terms taken in enumeration order, so an independent enumeration using the
    same order reproduces it bit-for-bit.
    """
    plan = DispatchPlan(model, schedule, context)
    terms = []
    for sc, prob in enumerate_scenarios(model, cap=cap):
        if run_plan(plan, sc).success:
            terms.append(prob)
    return math.fsum(terms)


@dataclass(frozen=True)
class ComparisonEntry:
    schedule_index: int
    p_hat: float
    std_error: float
    gap_to_next: float | None
    gap_std_error: float | None


@dataclass(frozen=True)
class ScheduleComparison:
    """Common-random-number ranking: every schedule is dispatched on the
    identical scenario set, so differences in p_hat are paired."""

    entries: tuple[ComparisonEntry, ...]
    n_samples: int
    master_seed: int
    success_matrix: np.ndarray = field(repr=False, compare=False, default=None)

    def ranked_indices(self) -> list[int]:
        return [e.schedule_index for e in self.entries]

    def paired_std_error(self, i: int, j: int) -> float:
        """Standard error of p_hat_i - p_hat_j on the common scenarios."""
        diff = self.success_matrix[i].astype(float) - self.success_matrix[j].astype(float)
        n = len(diff)
        if n < 2:
            return 0.0
        return float(diff.std(ddof=1) / math.sqrt(n))


def compare_schedules(model: MissionModel, schedules: list[Schedule],
                      n: int = 10000, master_seed: int = 0, *,
                      protocol: DispatchProtocol = ASAP,
                      workers: int = 1,
                      context: DispatchContext = DEFAULT_CONTEXT) -> ScheduleComparison:
    if len(schedules) < 2:
        raise ValueError("need at least two schedules to compare")
    scenarios = sample_scenarios(model, master_seed, 0, n)
    matrix = np.zeros((len(schedules), n), dtype=bool)

    def eval_one(k: int) -> None:
        plan = DispatchPlan(model, schedules[k], context)
        for i, r in enumerate(_evaluate_block(plan, scenarios)):
            matrix[k, i] = r[0]

    if workers <= 1:
        for k in range(len(schedules)):
            eval_one(k)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(eval_one, range(len(schedules))))

    p_hats = matrix.mean(axis=1)
    ranked = sorted(range(len(schedules)), key=lambda k: (-p_hats[k], k))
    entries = []
    for pos, k in enumerate(ranked):
        p = float(p_hats[k])
        se = math.sqrt(p * (1 - p) / n)
        gap = gap_se = None
        if pos + 1 < len(ranked):
            nxt = ranked[pos + 1]
            gap = p - float(p_hats[nxt])
            diff = matrix[k].astype(float) - matrix[nxt].astype(float)
            gap_se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        entries.append(ComparisonEntry(k, p, se, gap, gap_se))
    return ScheduleComparison(tuple(entries), n, master_seed, matrix)
