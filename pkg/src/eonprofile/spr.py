"""Service-profile realization: periodic bin reallocation of active requests.

Two schemes run every ``t0`` time units. The decision-points method moves a
request at most once, at a time chosen so that the time-weighted mean bin
size still reaches the requested average. Average tracking re-evaluates
every request on each tick, keeping its running average on target while
releasing spectrum when it is ahead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .occupancy import BinRef, OccupancyStore
from .partition import PartitionPlan
from .rsa import LinkPath, ServiceProfile

METHODS = ("dpm", "atm", "none")


@dataclass(frozen=True)
class SchedulerConfig:
    t0: float = 0.05
    margin: float = 0.0
    method: str = "atm"

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError(f"t0 must be positive, got {self.t0}")
        if self.margin < 0:
            raise ValueError(f"margin C must be non-negative, got {self.margin}")
        if self.method not in METHODS:
            raise ValueError(f"unknown SPR method {self.method!r}")


@dataclass(eq=False)
class ActiveRequest:
    """An admitted request and its bin-size history.

    ``area`` accumulates size x duration over closed segments; the open
    segment runs from ``seg_start`` at the current ``size``.
    """

    rid: int
    profile: ServiceProfile
    path: LinkPath
    pnum: int
    size: int
    admit_time: float
    b_as: int
    flag: bool = False
    area: float = 0.0
    seg_start: float = field(default=math.nan)
    history: list[tuple[int, float, float]] = field(default_factory=list)

    def __post_init__(self):
        if math.isnan(self.seg_start):
            self.seg_start = self.admit_time

    @property
    def departure(self) -> float:
        return self.admit_time + self.profile.H

    def average(self, now: float) -> float:
        """Time-weighted mean bin size over ``[admit_time, now]``."""
        elapsed = now - self.admit_time
        if elapsed <= 0:
            return float(self.size)
        return (self.area + self.size * (now - self.seg_start)) / elapsed

    def switch(self, now: float, pnum: int, size: int) -> None:
        self.history.append((self.size, self.seg_start, now))
        self.area += self.size * (now - self.seg_start)
        self.seg_start = now
        self.pnum = pnum
        self.size = size

    def segments(self, now: float) -> list[tuple[int, float, float]]:
        return self.history + [(self.size, self.seg_start, now)]


class Move(NamedTuple):
    time: float
    rid: int
    src: BinRef
    dst: BinRef
    reason: str
    # DPM: the decision-point threshold the move was checked against;
    # ATM: the unclamped minimum size for the coming interval.
    bound: float


def decision_point(b_d: float, b_as: float, b_ave: float, H: float) -> float:
    """Latest (or earliest) elapsed time at which moving to size ``b_d`` keeps the average.

    Moving from ``b_as`` to ``b_d`` at elapsed time ``t`` gives a lifetime
    mean of at least ``b_ave`` iff ``(b_d - b_as) t <= (b_d - b_ave) H``.
    """
    if b_d == b_as:
        raise ZeroDivisionError("decision point undefined when b_d equals the assigned size")
    return H * (b_d - b_ave) / (b_d - b_as)


def atm_min_size(av: float, t: float, t0: float, b_ave: float) -> float:
    """Smallest bin size that keeps the running average at ``b_ave`` after ``t0`` more."""
    return (b_ave * (t + t0) - av * t) / t0


def tick_order(requests: Iterable[ActiveRequest]) -> list[ActiveRequest]:
    return sorted(requests, key=lambda r: (r.departure, r.rid))


def _best_partition(counts: list[int], lo: int, hi: int, bonus_p: int = 0) -> int:
    """Partition in [lo, hi] with the most free bins; ties go to the lower index. 0 if none."""
    best, best_f = 0, 0
    for p in range(lo, hi + 1):
        f = counts[p - 1] + (1 if p == bonus_p else 0)
        if f > best_f:
            best, best_f = p, f
    return best


def _relocate(r: ActiveRequest, occ: OccupancyStore, plan: PartitionPlan, p: int, now: float, reason: str, bound: float) -> Move:
    dst = occ.first_free(r.path, p)
    src = occ.holding(r.rid)
    occ.move(r.rid, dst)
    r.switch(now, p, plan.bin_sizes[p - 1])
    return Move(now, r.rid, src, dst, reason, bound)


def dpm_tick(
    now: float, requests: Iterable[ActiveRequest], occ: OccupancyStore, plan: PartitionPlan, cfg: SchedulerConfig | None = None
) -> list[Move]:
    """One decision-points pass over the active requests."""
    sizes = plan.bin_sizes
    moves = []
    for r in tick_order(requests):
        if r.flag:
            continue
        prof = r.profile
        b_ave = sizes[prof.ave - 1]
        elapsed = now - r.admit_time
        if r.b_as == b_ave:
            r.flag = True
            continue
        if r.b_as < b_ave:
            if prof.M <= prof.ave:
                continue
            if elapsed > decision_point(sizes[prof.M - 1], r.b_as, b_ave, prof.H):
                continue
            d = prof.ave + 1
            while elapsed > decision_point(sizes[d - 1], r.b_as, b_ave, prof.H):
                d += 1
            p = _best_partition(occ.free_counts(r.path), d, prof.M)
            if p:
                bound = decision_point(sizes[p - 1], r.b_as, b_ave, prof.H)
                moves.append(_relocate(r, occ, plan, p, now, "dpm-up", bound))
                r.flag = True
        else:
            dp_m = decision_point(sizes[prof.m - 1], r.b_as, b_ave, prof.H)
            if not (dp_m <= elapsed <= prof.H):
                continue
            p = _best_partition(occ.free_counts(r.path), prof.m, prof.ave)
            if p:
                moves.append(_relocate(r, occ, plan, p, now, "dpm-down", dp_m))
                r.flag = True
    return moves


def min_partition_for_size(plan: PartitionPlan, size: float, lo: int, hi: int) -> int:
    """Smallest partition in [lo, hi] whose bin size is at least ``ceil(size)``; ``hi`` if none."""
    need = math.ceil(size)
    for p in range(lo, hi + 1):
        if plan.bin_sizes[p - 1] >= need:
            return p
    return hi


def atm_tick(
    now: float, requests: Iterable[ActiveRequest], occ: OccupancyStore, plan: PartitionPlan, cfg: SchedulerConfig
) -> list[Move]:
    """One average-tracking pass over the active requests."""
    sizes = plan.bin_sizes
    moves = []
    for r in tick_order(requests):
        prof = r.profile
        b_ave = sizes[prof.ave - 1]
        av = r.average(now)
        if av > b_ave + cfg.margin:
            s_min = atm_min_size(av, now - r.admit_time, cfg.t0, b_ave)
            p_lo = min_partition_for_size(plan, s_min, prof.m, prof.M)
            p = _best_partition(occ.free_counts(r.path), p_lo, prof.M, bonus_p=r.pnum)
            if p and p != r.pnum:
                moves.append(_relocate(r, occ, plan, p, now, "atm-down", s_min))
        else:
            for p in range(prof.M, r.pnum, -1):
                if occ.first_free(r.path, p) is not None:
                    moves.append(_relocate(r, occ, plan, p, now, "atm-up", math.nan))
                    break
    return moves


def run_tick(now, requests, occ, plan, cfg: SchedulerConfig) -> list[Move]:
    if cfg.method == "dpm":
        return dpm_tick(now, requests, occ, plan, cfg)
    if cfg.method == "atm":
        return atm_tick(now, requests, occ, plan, cfg)
    return []


def is_realized(r: ActiveRequest, b_ave: float, now: float | None = None) -> bool:
    """True when the lifetime mean bin size meets the requested average."""
    t = r.departure if now is None else now
    return r.average(t) >= b_ave - 1e-9 * b_ave
