import math

import pytest
from hypothesis import given, settings, strategies as st

from eonprofile.occupancy import BinRef, OccupancyStore
from eonprofile.partition import PartitionPlan
from eonprofile.rsa import ServiceProfile
from eonprofile.spr import (
    ActiveRequest, SchedulerConfig, atm_min_size, atm_tick, decision_point, dpm_tick, is_realized,
    min_partition_for_size, run_tick, tick_order,
)

PATH = (0,)


def plan_1_to(n, bins=2):
    sizes = tuple(range(1, n + 1))
    return PartitionPlan(sum(sizes) * bins, sizes, (bins,) * n)


def fill(occ, plan, pnum, rid0=1000):
    for b in range(1, plan.bin_counts[pnum - 1] + 1):
        occ.occupy(rid0 + 10 * pnum + b, PATH, BinRef(pnum, b))


def admitted(occ, plan, rid, prof, pnum, t):
    ref = occ.first_free(PATH, pnum)
    occ.occupy(rid, PATH, ref)
    size = plan.bin_sizes[pnum - 1]
    return ActiveRequest(rid, prof, PATH, pnum, size, t, size)


# --- closed forms ------------------------------------------------------------------

def test_decision_point_example():
    assert decision_point(6, 2, 4, 90) == 45.0


def test_decision_point_at_average_is_zero():
    assert decision_point(4, 2, 4, 90) == 0
    assert decision_point(4, 7, 4, 90) == 0
    assert decision_point(5, 9, 5, 100) == 0


def test_third_group_threshold_inside_lifetime():
    # b_m < b_Ave < b_AS
    dp = decision_point(2, 9, 5, 100)
    assert 0 < dp < 100
    assert dp == pytest.approx(100 * 3 / 7)


def test_decision_point_undefined():
    with pytest.raises(ZeroDivisionError):
        decision_point(3, 3, 4, 10)


@pytest.mark.parametrize("av, t, t0, ave, expect", [(4, 0, 1, 4, 4), (5, 10, 1, 4, -6), (3, 10, 1, 4, 14)])
def test_atm_min_size_examples(av, t, t0, ave, expect):
    assert atm_min_size(av, t, t0, ave) == expect


@settings(max_examples=300, deadline=None)
@given(b_as=st.integers(1, 10), b_ave=st.integers(1, 10), b_d=st.integers(1, 10), H=st.floats(0.1, 100),
       frac=st.floats(0, 1))
def test_dp_inequality_is_the_average_condition(b_as, b_ave, b_d, H, frac):
    # moving from b_as to b_d at elapsed t gives mean (b_as t + b_d (H - t)) / H
    if b_d == b_as:
        return
    t = frac * H
    mean = (b_as * t + b_d * (H - t)) / H
    dp = decision_point(b_d, b_as, b_ave, H)
    lhs = (b_d - b_as) * t <= (b_d - b_ave) * H
    assert lhs == (mean >= b_ave) or math.isclose(mean, b_ave, rel_tol=1e-9)
    if b_d > b_as:
        assert lhs == (t <= dp) or math.isclose(t, dp, rel_tol=1e-9, abs_tol=1e-12)
    else:
        assert lhs == (t >= dp) or math.isclose(t, dp, rel_tol=1e-9, abs_tol=1e-12)


@settings(max_examples=300, deadline=None)
@given(av=st.floats(1, 10), t=st.floats(0, 50), t0=st.floats(0.01, 2), b_ave=st.integers(1, 10), extra=st.floats(0, 5))
def test_atm_min_size_step_guarantee(av, t, t0, b_ave, extra):
    s = atm_min_size(av, t, t0, b_ave)
    new_avg = (av * t + (s + extra) * t0) / (t + t0)
    assert new_avg >= b_ave - 1e-9 * max(b_ave, abs(s) + extra)


def test_min_partition_for_size():
    plan = PartitionPlan(20, (1, 2, 4, 6), (2, 1, 1, 2))
    assert min_partition_for_size(plan, 2.5, 1, 4) == 3
    assert min_partition_for_size(plan, -3, 2, 4) == 2
    assert min_partition_for_size(plan, 9, 1, 3) == 3
    assert min_partition_for_size(plan, 4.0, 1, 4) == 3


# --- active request bookkeeping --------------------------------------------------------

def test_average_and_segments():
    r = ActiveRequest(0, ServiceProfile(1, 2, 3, 10.0), PATH, 1, 1, 2.0, 1)
    assert r.average(2.0) == 1.0
    r.switch(4.0, 3, 3)
    r.switch(7.0, 2, 2)
    assert r.segments(12.0) == [(1, 2.0, 4.0), (3, 4.0, 7.0), (2, 7.0, 12.0)]
    assert r.average(12.0) == pytest.approx((2 * 1 + 3 * 3 + 5 * 2) / 10)
    assert r.departure == 12.0
    assert is_realized(r, 2)
    assert not is_realized(r, 3)


def test_tick_order_by_departure_then_id():
    a = ActiveRequest(5, ServiceProfile(1, 1, 1, 3.0), PATH, 1, 1, 0.0, 1)
    b = ActiveRequest(2, ServiceProfile(1, 1, 1, 2.0), PATH, 1, 1, 1.0, 1)
    c = ActiveRequest(9, ServiceProfile(1, 1, 1, 1.0), PATH, 1, 1, 0.5, 1)
    assert [r.rid for r in tick_order([a, b, c])] == [c.rid, b.rid, a.rid]


def test_scheduler_config_validation():
    for bad in ({"t0": 0}, {"margin": -1}, {"method": "xyz"}):
        with pytest.raises(ValueError):
            SchedulerConfig(**bad)


# --- decision points --------------------------------------------------------------------

def dpm_setup():
    plan = plan_1_to(6, bins=1)
    occ = OccupancyStore(plan, 1)
    prof = ServiceProfile(1, 4, 6, 90.0)
    r = admitted(occ, plan, 1, prof, 2, 0.0)
    return plan, occ, r


def test_dpm_upgrade_before_decision_point():
    plan, occ, r = dpm_setup()
    fill(occ, plan, 5)
    moves = dpm_tick(10.0, [r], occ, plan)
    assert len(moves) == 1
    mv = moves[0]
    assert (mv.src, mv.dst, mv.reason) == (BinRef(2, 1), BinRef(6, 1), "dpm-up")
    assert mv.bound == 45.0
    assert r.flag and r.pnum == 6 and r.size == 6
    assert is_realized(r, 4)                          # (2*10 + 6*80) / 90 >= 4
    assert dpm_tick(11.0, [r], occ, plan) == []       # one shot


def test_dpm_no_move_after_last_decision_point():
    plan, occ, r = dpm_setup()
    fill(occ, plan, 5)
    fill(occ, plan, 6)
    for t in range(1, 90):
        if t == 46:
            occ.release(1000 + 60 + 1)                # size-6 bin frees only after DP_6 = 45
        assert dpm_tick(float(t), [r], occ, plan) == []
    assert not r.flag
    assert r.average(90.0) == 2 and not is_realized(r, 4)


def test_dpm_window_narrows_after_earlier_decision_point():
    # between DP_5 = 30 and DP_6 = 45 only partition 6 qualifies
    plan, occ, r = dpm_setup()
    moves = dpm_tick(35.0, [r], occ, plan)
    assert moves[0].dst.pnum == 6
    assert is_realized(r, 4)


def test_dpm_picks_most_free_partition_in_window():
    plan = PartitionPlan(1 + 2 + 3 * 2 + 4 * 3, (1, 2, 3, 4), (1, 1, 2, 3))
    occ = OccupancyStore(plan, 1)
    r = admitted(occ, plan, 1, ServiceProfile(1, 2, 4, 10.0), 1, 0.0)
    moves = dpm_tick(0.5, [r], occ, plan)
    assert moves[0].dst.pnum == 4


def test_dpm_group_two_never_moves():
    plan = plan_1_to(6, bins=1)
    occ = OccupancyStore(plan, 1)
    r = admitted(occ, plan, 1, ServiceProfile(1, 4, 6, 90.0), 4, 0.0)
    for t in range(1, 90):
        assert dpm_tick(float(t), [r], occ, plan) == []
    assert r.flag


def test_dpm_downgrade_waits_for_threshold():
    plan = plan_1_to(5, bins=1)
    occ = OccupancyStore(plan, 1)
    r = admitted(occ, plan, 1, ServiceProfile(1, 2, 5, 10.0), 5, 0.0)
    dp_m = decision_point(1, 5, 2, 10.0)
    assert dp_m == 2.5
    assert dpm_tick(2.0, [r], occ, plan) == []
    moves = dpm_tick(3.0, [r], occ, plan)
    assert moves[0].reason == "dpm-down" and moves[0].dst.pnum == 1
    assert moves[0].bound == dp_m
    assert is_realized(r, 2)


# --- average tracking -----------------------------------------------------------------

def test_atm_upgrade_scans_from_top():
    plan = plan_1_to(8, bins=1)
    occ = OccupancyStore(plan, 1)
    cfg = SchedulerConfig(t0=1.0)
    r = admitted(occ, plan, 1, ServiceProfile(1, 4, 8, 50.0), 3, 0.0)
    fill(occ, plan, 8)
    moves = atm_tick(1.0, [r], occ, plan, cfg)
    assert [(m.dst.pnum, m.reason) for m in moves] == [(7, "atm-up")]


def test_atm_stays_when_own_partition_is_best():
    plan = PartitionPlan(sum(range(1, 9)) + 6 * 2, tuple(range(1, 9)), (1, 1, 1, 1, 1, 3, 1, 1))
    occ = OccupancyStore(plan, 1)
    cfg = SchedulerConfig(t0=1.0)
    r = admitted(occ, plan, 1, ServiceProfile(2, 4, 8, 50.0), 6, 0.0)
    assert r.average(1.0) == 6
    assert atm_min_size(6, 1.0, 1.0, 4) == 2
    # partition 6 has two free bins plus the one it holds; everything else has one
    assert atm_tick(1.0, [r], occ, plan, cfg) == []


def test_atm_downgrade_to_most_free():
    plan = PartitionPlan(1 + 2 + 3 * 3 + 4 + 5, (1, 2, 3, 4, 5), (1, 1, 3, 1, 1))
    occ = OccupancyStore(plan, 1)
    cfg = SchedulerConfig(t0=1.0)
    r = admitted(occ, plan, 1, ServiceProfile(1, 3, 5, 50.0), 5, 0.0)
    # AV=5 at t=1: s_min = (3*2 - 5)/1 = 1, window [1, 5]; partition 3 has 3 free bins
    moves = atm_tick(1.0, [r], occ, plan, cfg)
    assert [(m.dst.pnum, m.reason, m.bound) for m in moves] == [(3, "atm-down", 1.0)]


def test_atm_at_top_stays():
    plan = plan_1_to(5, bins=1)
    occ = OccupancyStore(plan, 1)
    r = admitted(occ, plan, 1, ServiceProfile(1, 5, 5, 50.0), 5, 0.0)
    assert atm_tick(1.0, [r], occ, plan, SchedulerConfig(t0=1.0)) == []


def test_atm_margin_keeps_request_in_tracking_group():
    plan = plan_1_to(6, bins=1)
    occ = OccupancyStore(plan, 1)
    r = admitted(occ, plan, 1, ServiceProfile(1, 4, 6, 50.0), 5, 0.0)
    # AV=5 > 4 but not > 4 + 1: upgrade scan instead of downgrade
    moves = atm_tick(1.0, [r], occ, plan, SchedulerConfig(t0=1.0, margin=1.0))
    assert [m.reason for m in moves] == ["atm-up"]
    assert moves[0].dst.pnum == 6


def test_sequential_moves_within_tick_see_each_other():
    plan = plan_1_to(4, bins=1)
    occ = OccupancyStore(plan, 1)
    cfg = SchedulerConfig(t0=1.0)
    early = admitted(occ, plan, 1, ServiceProfile(1, 3, 4, 5.0), 1, 0.0)
    late = admitted(occ, plan, 2, ServiceProfile(1, 3, 4, 9.0), 2, 0.0)
    moves = atm_tick(1.0, [late, early], occ, plan, cfg)
    # the request leaving first takes the only size-4 bin; the other gets size 3
    assert [(m.rid, m.dst.pnum) for m in moves] == [(1, 4), (2, 3)]


def test_run_tick_dispatch():
    plan = plan_1_to(3, bins=1)
    occ = OccupancyStore(plan, 1)
    r = admitted(occ, plan, 1, ServiceProfile(1, 2, 3, 5.0), 1, 0.0)
    assert run_tick(1.0, [r], occ, plan, SchedulerConfig(method="none")) == []
    assert len(run_tick(1.0, [r], occ, plan, SchedulerConfig(method="atm"))) == 1
