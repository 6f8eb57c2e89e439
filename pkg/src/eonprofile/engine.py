"""Discrete-event trial loop and multi-trial experiment runner.

Events are processed in time order with ties broken departure, then tick,
then arrival, so resources released at an instant are visible to decisions
taken at the same instant. Ticks are only scheduled while requests are
active.
"""

from __future__ import annotations

import bisect
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import backend as _backend
from .occupancy import OccupancyStore
from .partition import PartitionPlan, make_plan
from .rsa import ROUTERS, LinkPath, ServiceProfile, assign_initial, compile_paths
from .spr import ActiveRequest, Move, SchedulerConfig, is_realized, run_tick
from .topology import Network, k_shortest_paths
from .traffic import TrafficConfig, generate_stream


class InvariantViolation(AssertionError):
    """Internal consistency check failed during a trial."""


@dataclass(frozen=True)
class Scenario:
    """Everything that determines a trial apart from the load and seed."""

    partitioning: str = "sip"
    routing: str = "pbr"
    spr: str = "atm"
    fs: int = 360
    bin_sizes: tuple[int, ...] = tuple(range(1, 11))
    extra_bins: tuple[int, ...] | None = None
    k: int = 4
    mean_holding: float = 1.0
    t0: float | None = None
    margin: float = 0.0
    requests: int = 100_000
    vf: int | None = None
    warmup: int = 0

    def __post_init__(self):
        if self.routing not in ROUTERS:
            raise ValueError(f"unknown routing {self.routing!r}")
        if self.requests < 1:
            raise ValueError("requests per trial must be at least 1")
        if not (0 <= self.warmup < self.requests):
            raise ValueError("warmup must be in [0, requests)")
        self.scheduler()  # validates t0 / margin / method

    @property
    def name(self) -> str:
        return f"{self.partitioning.upper()}-{self.routing.upper()}-{self.spr.upper()}"

    def scheduler(self) -> SchedulerConfig:
        t0 = self.t0 if self.t0 is not None else self.mean_holding / 20
        return SchedulerConfig(t0=t0, margin=self.margin, method=self.spr)

    def plan(self) -> PartitionPlan:
        return make_plan(self.partitioning, self.fs, self.bin_sizes, self.extra_bins)


@dataclass
class TrialStats:
    offered: int = 0
    admitted: int = 0
    blocked_routing: int = 0
    blocked_assignment: int = 0
    realized: int = 0
    moves: int = 0
    slot_time: float = 0.0  # integral of busy slot-links over the arrival window
    horizon: float = 0.0
    capacity: int = 0  # total slots x directed links

    @property
    def blocked(self) -> int:
        return self.blocked_routing + self.blocked_assignment

    @property
    def bp(self) -> float:
        return self.blocked / self.offered if self.offered else 0.0

    @property
    def rf(self) -> float:
        return self.realized / self.offered if self.offered else 0.0

    @property
    def sur(self) -> float:
        denom = self.capacity * self.horizon
        return self.slot_time / denom if denom > 0 else 0.0


@dataclass(frozen=True)
class Context:
    net: Network
    plan: PartitionPlan
    paths: dict[tuple[str, str], list[LinkPath]]
    n_links: int


@lru_cache(maxsize=32)
def _paths_for(net: Network, k: int):
    return compile_paths(net, k_shortest_paths(net, k))


def prepare(scenario: Scenario, net: Network) -> Context:
    return Context(net, scenario.plan(), _paths_for(net, scenario.k), len(net.directed_links))


def trial_seed(seed: int, trial: int) -> np.random.SeedSequence:
    # Load is deliberately not mixed in: the same trial index sees the same
    # random stream shape at every scenario, which pairs comparisons.
    return np.random.SeedSequence([seed, trial])


def make_stream(scenario: Scenario, net: Network, load: float, seed) -> list[ServiceProfile]:
    cfg = TrafficConfig(
        load=load,
        mean_holding=scenario.mean_holding,
        requests=scenario.requests,
        n_partitions=len(scenario.bin_sizes),
        vf=scenario.vf,
        seed=seed,
    )
    return generate_stream(cfg, net.nodes)


def simulate_python(
    ctx: Context,
    stream: Sequence[ServiceProfile],
    scenario: Scenario,
    check: bool = False,
    trace: list[Move] | None = None,
) -> TrialStats:
    """Reference event loop built from the library's occupancy/rsa/spr pieces."""
    plan = ctx.plan
    sizes = plan.bin_sizes
    cfg = scenario.scheduler()
    router = ROUTERS[scenario.routing]
    occ = OccupancyStore(plan, ctx.n_links)
    keys: list[tuple[float, int]] = []
    active: dict[int, ActiveRequest] = {}
    st = TrialStats(capacity=plan.total_slots * ctx.n_links)
    n = len(stream)
    horizon = stream[-1].arrival if n else 0.0
    st.horizon = horizon
    t0 = cfg.t0
    spr_on = cfg.method != "none"
    tick_n = -1
    used = 0
    last = 0.0
    i = 0
    pending_atm: list[tuple[ActiveRequest, float]] = []
    dpm_moved: set[int] = set()
    inf = math.inf

    while True:
        ta = stream[i].arrival if i < n else inf
        td = keys[0][0] if keys else inf
        tt = tick_n * t0 if tick_n >= 0 else inf
        if ta == inf and td == inf and tt == inf:
            break
        if td <= tt and td <= ta:
            now, kind = td, 0
        elif tt <= ta:
            now, kind = tt, 1
        else:
            now, kind = ta, 2
        if now > last:
            st.slot_time += used * (min(now, horizon) - min(last, horizon))
            last = now

        if kind == 0:
            _, rid = keys.pop(0)
            r = active.pop(rid)
            b_ave = sizes[r.profile.ave - 1]
            ok = is_realized(r, b_ave, now)
            if check and rid in dpm_moved and not ok:
                raise InvariantViolation(f"request {rid} moved by DPM but missed its average")
            if ok and rid >= scenario.warmup:
                st.realized += 1
            occ.release(rid)
            used -= r.size * len(r.path)
        elif kind == 1:
            reqs = [active[rid] for _, rid in keys]
            if check:
                _check_tick(now, reqs, pending_atm, sizes)
            moves = run_tick(now, reqs, occ, plan, cfg)
            for mv in moves:
                r = active[mv.rid]
                used += (sizes[mv.dst.pnum - 1] - sizes[mv.src.pnum - 1]) * len(r.path)
                if check:
                    _check_move(mv, r, sizes, plan, cfg, pending_atm, dpm_moved)
            st.moves += len(moves)
            if trace is not None:
                trace.extend(moves)
            tick_n = tick_n + 1 if keys else -1
        else:
            req = stream[i]
            rid = i
            i += 1
            counted = rid >= scenario.warmup
            if counted:
                st.offered += 1
            paths = ctx.paths[req.route]
            idx = router(req, paths, occ)
            if idx is None:
                if counted:
                    st.blocked_routing += 1
            else:
                ref = assign_initial(req, paths[idx], occ)
                if ref is None:
                    if counted:
                        st.blocked_assignment += 1
                else:
                    occ.occupy(rid, paths[idx], ref)
                    size = sizes[ref.pnum - 1]
                    r = ActiveRequest(rid, req, paths[idx], ref.pnum, size, now, size)
                    active[rid] = r
                    bisect.insort(keys, (r.departure, rid))
                    used += size * len(paths[idx])
                    if counted:
                        st.admitted += 1
        if spr_on and tick_n < 0 and keys:
            tick_n = math.floor(now / t0) + 1

    if check:
        if not occ.is_empty():
            raise InvariantViolation("occupancy not empty at trial end")
        if st.offered != st.admitted + st.blocked:
            raise InvariantViolation("offered != admitted + blocked")
    return st


def _check_move(mv: Move, r: ActiveRequest, sizes, plan, cfg, pending_atm, dpm_moved) -> None:
    prof = r.profile
    new = sizes[mv.dst.pnum - 1]
    if not (prof.m <= mv.dst.pnum <= prof.M):
        raise InvariantViolation(f"request {mv.rid} moved outside its profile window")
    elapsed = mv.time - r.admit_time
    if mv.reason.startswith("dpm") and mv.rid in dpm_moved:
        raise InvariantViolation(f"DPM moved request {mv.rid} twice")
    if mv.reason == "dpm-up":
        if not elapsed <= mv.bound:
            raise InvariantViolation(f"DPM upgrade of {mv.rid} after its decision point")
        dpm_moved.add(mv.rid)
    elif mv.reason == "dpm-down":
        if not mv.bound <= elapsed:
            raise InvariantViolation(f"DPM downgrade of {mv.rid} before its decision point")
        dpm_moved.add(mv.rid)
    elif mv.reason == "atm-down" and sizes[prof.m - 1] <= mv.bound <= sizes[prof.M - 1]:
        if new < mv.bound:
            raise InvariantViolation(f"ATM moved {mv.rid} below its minimum size")
        pending_atm.append((r, mv.time))


def _check_tick(now: float, reqs: list[ActiveRequest], pending_atm: list, sizes) -> None:
    for r, _ in pending_atm:
        if r.departure > now:
            b_ave = sizes[r.profile.ave - 1]
            if r.average(now) < b_ave - 1e-9 * b_ave:
                raise InvariantViolation(f"ATM step guarantee violated for request {r.rid}")
    pending_atm.clear()
    for r in reqs:
        segs = r.segments(now)
        elapsed = now - r.admit_time
        if elapsed <= 0:
            continue
        exact = math.fsum(s * (b - a) for s, a, b in segs) / elapsed
        if not math.isclose(exact, r.average(now), rel_tol=1e-9):
            raise InvariantViolation(f"running average of request {r.rid} drifted from its history")


def run_trial(
    scenario: Scenario,
    load: float,
    seed,
    net: Network,
    backend: str | None = None,
    stream: Sequence[ServiceProfile] | None = None,
    check: bool = False,
    trace: list[Move] | None = None,
) -> TrialStats:
    """Simulate one trial of ``scenario`` at ``load`` erlang.

    ``seed`` may be an int or a SeedSequence. Passing ``stream`` replays a
    fixed request list instead of drawing one.
    """
    ctx = prepare(scenario, net)
    if stream is None:
        stream = make_stream(scenario, net, load, seed)
    name = _backend.resolve(backend)
    if name == "compiled" and not check and trace is None:
        return _backend.simulate_compiled(ctx, stream, scenario)
    return simulate_python(ctx, stream, scenario, check=check, trace=trace)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    loads: tuple[float, ...]
    trials_max: int = 10
    trials_min: int = 2
    confidence: float = 0.90
    rel_halfwidth: float = 0.10
    seed: int = 1
    parallel: int = 1
    backend: str | None = None
    same_seed: bool = False
    check: bool = False

    def __post_init__(self):
        if self.trials_max < 1:
            raise ValueError("trials_max must be at least 1")
        if not self.loads:
            raise ValueError("need at least one load point")
        if not (0 < self.confidence < 1):
            raise ValueError("confidence must be in (0, 1)")


@dataclass
class LoadResult:
    scenario: str
    load: float
    trials: int
    bp: float
    bp_halfwidth: float
    sur: float
    sur_halfwidth: float
    rf: float
    rf_halfwidth: float
    wall_time: float
    per_trial: list[TrialStats] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("per_trial")
        return d


def mean_halfwidth(values: Sequence[float], confidence: float) -> tuple[float, float]:
    """Sample mean and Student-t half-width; half-width is NaN for one sample."""
    x = np.asarray(values, dtype=float)
    mean = float(x.mean())
    if len(x) < 2:
        return mean, math.nan
    sd = float(x.std(ddof=1))
    q = stats.t.ppf(0.5 + confidence / 2, len(x) - 1)
    return mean, float(q * sd / math.sqrt(len(x)))


def _trial_job(args):
    scenario, load, seed, net, backend, stream, check = args
    return run_trial(scenario, load, seed, net, backend=backend, stream=stream, check=check)


def _converged(trials: list[TrialStats], cfg: ExperimentConfig) -> bool:
    if len(trials) < max(cfg.trials_min, 2):
        return False
    bp, hw = mean_halfwidth([t.bp for t in trials], cfg.confidence)
    return hw <= cfg.rel_halfwidth * bp


def run_experiment(
    cfg: ExperimentConfig,
    net: Network,
    streams: Callable[[float, int], Sequence[ServiceProfile] | None] | None = None,
) -> list[LoadResult]:
    """Run every load point until the BP interval is tight enough or trials run out.

    ``streams(load, trial)`` may return a recorded request list to replay for
    that trial instead of drawing a fresh one.
    """
    out = []
    pool = ProcessPoolExecutor(cfg.parallel) if cfg.parallel > 1 else None
    try:
        for load in cfg.loads:
            start = time.perf_counter()
            trials: list[TrialStats] = []
            done = False
            while not done and len(trials) < cfg.trials_max:
                # Batches keep parallel workers busy. The stop rule is applied
                # trial by trial afterwards, so the result does not depend on
                # the worker count.
                batch = min(max(cfg.parallel, 1), cfg.trials_max - len(trials))
                idx = [0 if cfg.same_seed else len(trials) + j for j in range(batch)]
                jobs = [
                    (cfg.scenario, load, trial_seed(cfg.seed, t), net, cfg.backend,
                     streams(load, t) if streams else None, cfg.check)
                    for t in idx
                ]
                results = map(_trial_job, jobs) if pool is None else pool.map(_trial_job, jobs)
                for st in results:
                    trials.append(st)
                    if _converged(trials, cfg):
                        done = True
                        break
            bp, bp_hw = mean_halfwidth([t.bp for t in trials], cfg.confidence)
            sur, sur_hw = mean_halfwidth([t.sur for t in trials], cfg.confidence)
            rf, rf_hw = mean_halfwidth([t.rf for t in trials], cfg.confidence)
            out.append(
                LoadResult(cfg.scenario.name, load, len(trials), bp, bp_hw, sur, sur_hw, rf, rf_hw,
                           time.perf_counter() - start, trials)
            )
    finally:
        if pool is not None:
            pool.shutdown()
    return out


def with_overrides(scenario: Scenario, **kw) -> Scenario:
    return replace(scenario, **kw)
