from __future__ import annotations

import math

import pytest

from solsched.dispatch import Schedule
from solsched.instances import four_task_line, order_schedule
from solsched.model import (
    Activity,
    ActivityWindow,
    DurationModel,
    MissionCalendar,
    ProjectModel,
    Resource,
    TemporalConstraint,
    merge_mission,
)
from solsched.modelio import estimate_from_doc, estimate_to_doc
from solsched.robustness import compare_schedules, estimate_robustness, exact_robustness
from solsched.synthetic import random_discrete_instance

from .oracles import brute_force_robustness


def test_deterministic_feasible_schedule_is_certain(line_model):
    m = four_task_line(a_duration=DurationModel.fixed(60))
    sched = order_schedule(m, ["A", "B", "C", "D"])
    est = estimate_robustness(m, sched, n=200, master_seed=1)
    assert est.p_hat == 1.0
    assert est.std_error == 0.0
    assert est.p_hat + est.p_fail == 1.0


def test_four_task_estimates_match_exact(line_model, abcd, acbd):
    exact_abcd = exact_robustness(line_model, abcd)
    exact_acbd = exact_robustness(line_model, acbd)
    assert exact_abcd == 0.5
    assert exact_acbd == 1.0
    est = estimate_robustness(line_model, abcd, n=10000, master_seed=7)
    assert abs(est.p_hat - exact_abcd) <= 3 * est.std_error
    est2 = estimate_robustness(line_model, acbd, n=10000, master_seed=7)
    assert est2.p_hat == 1.0  # A never exceeds the sol-one slack in this instance


def test_exact_single_activity_window_read_off():
    act = Activity("x", duration=DurationModel.choice([(30, 0.9), (300, 0.1)]),
                   window=ActivityWindow("absolute", 0, 60))
    m = merge_mission([ProjectModel(id="p", activities=(act,))], [],
                      MissionCalendar(1, ((0, 1440),)))
    assert exact_robustness(m, Schedule(("p:x",))) == pytest.approx(0.9)


def test_exact_matches_brute_force_bit_for_bit_81_scenarios():
    d3 = DurationModel.choice([(60, 0.25), (120, 0.35), (240, 0.4)])
    acts = tuple(Activity(f"a{i}", duration=d3, requirements=(("r", 1),))
                 for i in range(4))
    cons = (TemporalConstraint(("a0", "end"), ("a3", "start"), same_sol=True),)
    m = merge_mission(
        [ProjectModel(id="p", activities=acts, constraints=cons)],
        [Resource("r")],
        MissionCalendar(2, ((0, 720),), 720))
    sched = Schedule(tuple(sorted(a.id for a in m.activities)))
    mine = exact_robustness(m, sched)
    oracle = brute_force_robustness(m, sched)
    assert mine == oracle  # bit-for-bit
    assert 0.0 < mine < 1.0


def test_exact_matches_brute_force_on_random_instances():
    agree = 0
    for seed in range(25):
        m = random_discrete_instance(seed)
        sched = Schedule(tuple(sorted(a.id for a in m.activities)))
        assert exact_robustness(m, sched) == brute_force_robustness(m, sched)
        agree += 1
    assert agree == 25


def test_ci95_forms():
    est = estimate_robustness(four_task_line(), order_schedule(four_task_line(), list("ABCD")),
                              n=400, master_seed=5)
    lo, hi = est.ci95
    assert 0.0 <= lo <= est.p_hat <= hi <= 1.0
    # degenerate estimate gets a Wilson interval, not a zero-width one
    m = four_task_line(a_duration=DurationModel.fixed(60))
    est1 = estimate_robustness(m, order_schedule(m, list("ABCD")), n=100, master_seed=5)
    assert est1.p_hat == 1.0
    assert est1.ci95[0] < 1.0 and est1.ci95[1] == 1.0


def test_conditional_kpis_over_successes(line_model, acbd):
    est = estimate_robustness(line_model, acbd, n=500, master_seed=2)
    assert est.p_hat == 1.0
    makespan = est.kpis["makespan"].mean
    assert makespan == 2160.0  # D ends mid second sol regardless of A
    est_fail = estimate_robustness(
        four_task_line(a_duration=DurationModel.choice([(300, 1.0)])),
        order_schedule(four_task_line(), list("ABCD")), n=50, master_seed=2)
    assert est_fail.p_hat == 0.0
    assert est_fail.kpis == {}


def test_worker_count_does_not_change_results(line_model, abcd):
    a = estimate_robustness(line_model, abcd, n=2000, master_seed=11, workers=1)
    b = estimate_robustness(line_model, abcd, n=2000, master_seed=11, workers=8)
    assert a == b


def test_estimate_reproducible_across_calls(line_model, abcd):
    a = estimate_robustness(line_model, abcd, n=1000, master_seed=13)
    b = estimate_robustness(line_model, abcd, n=1000, master_seed=13)
    assert a == b
    c = estimate_robustness(line_model, abcd, n=1000, master_seed=14)
    assert a != c


def test_estimate_round_trip_codec(line_model, abcd):
    est = estimate_robustness(line_model, abcd, n=100, master_seed=1)
    assert estimate_from_doc(estimate_to_doc(est)) == est


# -------------------------------------------------------------- comparison

def test_compare_schedules_ranks_robust_order_first(line_model, abcd, acbd):
    report = compare_schedules(line_model, [abcd, acbd], n=10000, master_seed=3)
    assert report.ranked_indices()[0] == 1  # the C-before-B order
    top = report.entries[0]
    assert top.p_hat == 1.0
    assert top.gap_to_next == pytest.approx(0.5, abs=3 * (top.gap_std_error or 1))


def test_compare_duplicate_schedule_identical_p(line_model, abcd):
    report = compare_schedules(line_model, [abcd, abcd], n=2000, master_seed=9)
    assert report.entries[0].p_hat == report.entries[1].p_hat
    assert report.paired_std_error(0, 1) == 0.0


def test_compare_invariant_to_list_order(line_model, abcd, acbd):
    r1 = compare_schedules(line_model, [abcd, acbd], n=3000, master_seed=4)
    r2 = compare_schedules(line_model, [acbd, abcd], n=3000, master_seed=4)
    p1 = {0: None, 1: None}
    for e in r1.entries:
        p1[e.schedule_index] = e.p_hat
    p2 = {e.schedule_index: e.p_hat for e in r2.entries}
    assert p1[0] == p2[1] and p1[1] == p2[0]


def test_compare_agrees_with_exact_when_gap_is_clear():
    checked = 0
    for seed in range(12):
        m = random_discrete_instance(seed, dur_lo=60, dur_hi=300, horizon_sols=1)
        ids = sorted(a.id for a in m.activities)
        s1 = Schedule(tuple(ids))
        s2 = Schedule(tuple(reversed(ids)))
        exact1, exact2 = exact_robustness(m, s1), exact_robustness(m, s2)
        report = compare_schedules(m, [s1, s2], n=4000, master_seed=seed)
        gap_se = report.paired_std_error(0, 1)
        if abs(exact1 - exact2) > 4 * max(gap_se, 1e-9):
            best_exact = 0 if exact1 > exact2 else 1
            assert report.ranked_indices()[0] == best_exact, f"seed {seed}"
            checked += 1
    assert checked >= 3


def test_compare_requires_two(line_model, abcd):
    with pytest.raises(ValueError):
        compare_schedules(line_model, [abcd], n=10)


def test_math_consistency(line_model, abcd):
    est = estimate_robustness(line_model, abcd, n=5000, master_seed=21)
    assert est.std_error == pytest.approx(
        math.sqrt(est.p_hat * (1 - est.p_hat) / est.n_samples))
