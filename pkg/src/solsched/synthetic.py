"""Seeded random instance generators for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .model import (
    Activity,
    ActivityWindow,
    DurationModel,
    MissionCalendar,
    MissionModel,
    ProjectModel,
    Resource,
    ResourceKind,
    TemporalConstraint,
    merge_mission,
)

__all__ = ["random_discrete_instance", "synthetic_mission"]


def _random_discrete(rng: np.random.Generator, max_values: int,
                     lo: int = 10, hi: int = 120) -> DurationModel:
    k = int(rng.integers(1, max_values + 1))
    values = sorted(rng.choice(np.arange(lo, hi + 1), size=k, replace=False).tolist())
    raw = rng.integers(1, 10, size=k).astype(float)
    probs = raw / raw.sum()
    probs[-1] = 1.0 - float(probs[:-1].sum())  # exact unit mass
    return DurationModel.choice(list(zip(values, probs.tolist())))


def random_discrete_instance(seed: int, max_activities: int = 5,
                             max_values: int = 3, max_resources: int = 2,
                             horizon_sols: int = 2,
                             dur_lo: int = 10, dur_hi: int = 120,
                             min_activities: int = 2) -> MissionModel:
    """Small all-discrete instance: a random precedence DAG over one or two
    shared resources, with occasional delays, deadlines, same-sol flags and
    daily windows.  Enumerable exactly; used by the oracle suites."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(min_activities, max_activities + 1))
    n_res = int(rng.integers(1, max_resources + 1))
    resources = [Resource(f"r{j}", ResourceKind.EQUIPMENT,
                          capacity=1 if j == 0 else int(rng.integers(1, 3)))
                 for j in range(n_res)]
    names = [chr(ord("a") + i) for i in range(n)]
    activities = []
    for i, name in enumerate(names):
        reqs = []
        for j, res in enumerate(resources):
            if j == 0 or rng.random() < 0.5:
                reqs.append((res.id, 1))
        window = None
        if rng.random() < 0.3:
            start = int(rng.integers(0, 4)) * 60
            end = start + int(rng.integers(3, 9)) * 60
            window = ActivityWindow("daily", start, min(end, 720))
        activities.append(Activity(
            id=name,
            duration=_random_discrete(rng, max_values, dur_lo, dur_hi),
            requirements=tuple(reqs),
            window=window,
        ))
    constraints = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.35:
                delay = DurationModel.fixed(int(rng.integers(0, 3)) * 30)
                if rng.random() < 0.15:
                    delay = _random_discrete(rng, 2, lo=0, hi=120)
                max_delay = None
                if rng.random() < 0.2:
                    max_delay = delay.bounds()[1] + int(rng.integers(2, 10)) * 60
                constraints.append(TemporalConstraint(
                    (names[i], "end"), (names[j], "start"),
                    min_delay=delay, max_delay=max_delay,
                    same_sol=bool(rng.random() < 0.15)))
    project = ProjectModel(id="p", activities=tuple(activities),
                           constraints=tuple(constraints))
    calendar = MissionCalendar(horizon_sols=horizon_sols,
                               work_windows=((0, 720),), minutes_per_sol=720)
    return merge_mission([project], resources, calendar)


def synthetic_mission(seed: int = 0, n_projects: int = 8, n_activities: int = 162,
                      horizon_sols: int = 12, n_crew: int = 6,
                      sol_delay_prob: float = 0.08) -> MissionModel:
    """Mission-scale benchmark: a multi-project network with PERT durations,
    shared unit equipment, occasional multi-sol stochastic delays and a
    sol-structured two-window work day."""
    rng = np.random.default_rng(seed)
    crew = [Resource(f"crew{c}", ResourceKind.CREW_MEMBER, 1) for c in range(n_crew)]
    equipment = [
        Resource("laf", ResourceKind.EQUIPMENT, 1),
        Resource("bench", ResourceKind.EQUIPMENT, 2),
        Resource("dome", ResourceKind.EQUIPMENT, 3),
    ]
    counts = [n_activities // n_projects] * n_projects
    for i in range(n_activities - sum(counts)):
        counts[i] += 1

    projects = []
    sol = 1440
    for p in range(n_projects):
        n = counts[p]
        acts = []
        cons = []
        # two or three parallel chains per project
        n_chains = int(rng.integers(2, 4))
        chain_prev: list[str | None] = [None] * n_chains
        for i in range(n):
            aid = f"a{i:03d}"
            lo = int(rng.integers(10, 30))
            mode = lo + int(rng.integers(5, 30))
            hi = mode + int(rng.integers(10, 60))
            reqs = []
            if rng.random() < 0.15:
                reqs.append(("laf", 1))
            elif rng.random() < 0.2:
                reqs.append(("bench", 1))
            elif rng.random() < 0.2:
                reqs.append(("dome", 1))
            window = None
            if rng.random() < 0.15:
                window = ActivityWindow("daily", 540, 720)  # morning block
            eligible = rng.choice(n_crew, size=int(rng.integers(1, 3)), replace=False)
            acts.append(Activity(
                id=aid,
                duration=DurationModel.pert(lo, mode, hi),
                requirements=tuple(reqs),
                eligible_crew=frozenset(f"crew{c}" for c in eligible.tolist()),
                crew_needed=1,
                window=window,
                cost=float(rng.integers(1, 20)),
            ))
            chain = int(rng.integers(0, n_chains))
            prev = chain_prev[chain]
            if prev is not None:
                if rng.random() < sol_delay_prob:
                    delay = DurationModel.choice(
                        [(1 * sol, 1 / 3), (2 * sol, 1 / 3), (3 * sol, 1 / 3)])
                else:
                    delay = DurationModel.fixed(0)
                cons.append(TemporalConstraint((prev, "end"), (aid, "start"),
                                               min_delay=delay))
            chain_prev[chain] = aid
        projects.append(ProjectModel(id=f"proj{p}", name=f"project {p}",
                                     activities=tuple(acts), constraints=tuple(cons)))
    calendar = MissionCalendar(
        horizon_sols=horizon_sols,
        work_windows=((540, 720), (810, 1080)),
        minutes_per_sol=sol)
    return merge_mission(projects, crew + equipment, calendar)
