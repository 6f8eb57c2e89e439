"""Independent reference implementations used as test oracles.

Nothing here imports the simulator's occupancy, rsa or spr modules; each
oracle recomputes its answer from plain lists so that agreement with the
library is evidence rather than tautology.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field

from eonprofile.occupancy import BinRef, OccupancyError, OccupancyStore
from eonprofile.partition import PartitionPlan


# ----------------------------------------------------------------------------
# slot-level spectrum (no partitioning)

class SlotGrid:
    """Per-link slot owners with first-fit contiguous allocation."""

    def __init__(self, links, n_slots):
        self.n = n_slots
        self.owner = {lk: [None] * n_slots for lk in links}

    def place(self, name, path, start, width):
        """Occupy 1-based slots ``start .. start+width-1`` on every link of ``path``."""
        for lk in path:
            for s in range(start - 1, start - 1 + width):
                assert self.owner[lk][s] is None, f"slot {s + 1} on {lk} already used"
                self.owner[lk][s] = name

    def free_slots(self, path):
        return [s + 1 for s in range(self.n) if all(self.owner[lk][s] is None for lk in path)]

    def first_fit(self, path, width):
        run = 0
        for s in range(self.n):
            if all(self.owner[lk][s] is None for lk in path):
                run += 1
                if run == width:
                    return s - width + 2
            else:
                run = 0
        return None


# ----------------------------------------------------------------------------
# occupancy replay oracle

def _oracle_state(active: dict, n_links: int):
    """Recompute (link, pnum, bnum) -> owner from the active-request list only."""
    state = {}
    for rid, (links, ref) in active.items():
        for lk in links:
            key = (lk, ref.pnum, ref.bnum)
            assert key not in state, "oracle bookkeeping double-booked a cell"
            state[key] = rid
    return state


def _free_in_oracle(state, links, ref):
    return all((lk, ref.pnum, ref.bnum) not in state for lk in links)


@dataclass
class ReplayReport:
    ops: int = 0
    violations: list[str] = field(default_factory=list)
    counts: dict = field(default_factory=lambda: {"occupy": 0, "release": 0, "move": 0, "rejected": 0})


def occupancy_replay(plan: PartitionPlan, paths, n_links: int, n_ops: int, seed: int,
                     full_check_every: int = 1) -> ReplayReport:
    """Drive an :class:`OccupancyStore` with random operations and compare it to the oracle.

    ``paths`` is a list of link-index tuples. Occupy and move targets are
    drawn from all bins, so conflicting requests are common and must be
    rejected. Every ``full_check_every`` operations the store's snapshot,
    owners, UBVs and free counts are compared against a recomputation.
    """
    rng = random.Random(seed)
    store = OccupancyStore(plan, n_links)
    active: dict[int, tuple[tuple[int, ...], BinRef]] = {}
    refs = [BinRef(p, b) for p in range(1, plan.n + 1) for b in range(1, plan.bin_counts[p - 1] + 1)]
    rep = ReplayReport()
    next_rid = 0

    def fail(msg):
        rep.violations.append(f"op {rep.ops}: {msg}")

    for _ in range(n_ops):
        rep.ops += 1
        state = _oracle_state(active, n_links)
        r = rng.random()
        if r < 0.45 or not active:
            path = rng.choice(paths)
            ref = rng.choice(refs)
            expect_ok = _free_in_oracle(state, path, ref)
            try:
                store.occupy(next_rid, path, ref)
                ok = True
            except OccupancyError:
                ok = False
            if ok != expect_ok:
                fail(f"occupy {ref} on {path}: store said {ok}, oracle {expect_ok}")
            if expect_ok:
                active[next_rid] = (tuple(path), ref)
                rep.counts["occupy"] += 1
            else:
                rep.counts["rejected"] += 1
            next_rid += 1
        elif r < 0.75:
            rid = rng.choice(list(active))
            got = store.release(rid)
            if got != active[rid][1]:
                fail(f"release {rid} returned {got}, oracle {active[rid][1]}")
            del active[rid]
            rep.counts["release"] += 1
        elif r < 0.97:
            rid = rng.choice(list(active))
            links, cur = active[rid]
            ref = rng.choice(refs)
            others = {k: v for k, v in state.items() if v != rid}
            expect_ok = ref == cur or _free_in_oracle(others, links, ref)
            try:
                store.move(rid, ref)
                ok = True
            except OccupancyError:
                ok = False
            if ok != expect_ok:
                fail(f"move {rid} {cur}->{ref}: store said {ok}, oracle {expect_ok}")
            if expect_ok:
                active[rid] = (links, ref)
                rep.counts["move"] += 1
            else:
                rep.counts["rejected"] += 1
        else:
            # operations on unknown requests must fail loudly
            bogus = next_rid + 10_000
            for op in (lambda: store.release(bogus), lambda: store.move(bogus, refs[0])):
                try:
                    op()
                    fail("operation on unknown request succeeded")
                except OccupancyError:
                    pass

        if rep.ops % full_check_every == 0:
            _compare(store, active, plan, paths, n_links, refs, fail)

    for rid in list(active):
        store.release(rid)
        del active[rid]
    if not store.is_empty():
        fail("store not empty after releasing every request")
    return rep


def _compare(store, active, plan, paths, n_links, refs, fail):
    state = _oracle_state(active, n_links)
    snap = {lk: sorted(rs) for lk, rs in store.snapshot().items()}
    expect = {}
    for lk, p, b in state:
        expect.setdefault(lk, []).append(BinRef(p, b))
    expect = {lk: sorted(v) for lk, v in expect.items()}
    if snap != expect:
        fail("snapshot differs from replayed state")
        return
    for (lk, p, b), rid in state.items():
        if store.owner(lk, BinRef(p, b)) != rid:
            fail(f"owner of {(lk, p, b)} wrong")
    if store.busy_cell_total() != sum(len(links) for links, _ in active.values()):
        fail("busy cell total differs from sum of path lengths")
    if sorted(store.active()) != sorted(active):
        fail("active request sets differ")
    for path in paths[:4]:
        ubv = {r for r in refs if _free_in_oracle(state, path, r)}
        if store.ubv(path) != ubv:
            fail(f"UBV of {path} differs")
        fc = [sum(1 for r in ubv if r.pnum == p) for p in range(1, plan.n + 1)]
        if store.free_counts(path) != fc:
            fail(f"free counts of {path} differ")


# ----------------------------------------------------------------------------
# straight-line reference simulator

@dataclass
class RefCounters:
    offered: int = 0
    admitted: int = 0
    blocked_routing: int = 0
    blocked_assignment: int = 0
    realized: int = 0
    moves: int = 0
    slot_time: float = 0.0


def reference_simulate(stream, link_paths, sizes, counts, method, routing, t0, margin=0.0) -> RefCounters:
    """Re-derive one trial from the model rules using only lists and a heap.

    ``link_paths[(src, dst)]`` holds the candidate paths as tuples of link
    indices. Bins are numbered per partition; a cell is ``(p, b)``.
    """
    n_links = 1 + max(lk for ps in link_paths.values() for p in ps for lk in p)
    N = len(sizes)
    cells = {p: [(p, b) for b in range(1, counts[p - 1] + 1)] for p in range(1, N + 1)}
    owner = [dict() for _ in range(n_links)]  # link -> {(p, b): rid}
    reqs = {}  # rid -> dict of live state
    out = RefCounters()
    horizon = stream[-1].arrival if stream else 0.0

    def is_free(path, cell):
        return all(cell not in owner[lk] for lk in path)

    def free_cells(path, p):
        return [c for c in cells[p] if is_free(path, c)]

    def take(rid, path, cell):
        for lk in path:
            owner[lk][cell] = rid

    def drop(path, cell):
        for lk in path:
            del owner[lk][cell]

    def move_to(r, p, now):
        cell = free_cells(r["path"], p)[0]
        drop(r["path"], r["cell"])
        take(r["rid"], r["path"], cell)
        r["area"] += r["size"] * (now - r["seg"])
        r["seg"] = now
        r["cell"] = cell
        r["size"] = sizes[p - 1]
        out.moves += 1

    def average(r, now):
        el = now - r["admit"]
        if el <= 0:
            return float(r["size"])
        return (r["area"] + r["size"] * (now - r["seg"])) / el

    def best(path, lo, hi, bonus=None):
        best_p, best_f = None, 0
        for p in range(lo, hi + 1):
            f = len(free_cells(path, p)) + (1 if p == bonus else 0)
            if f > best_f:
                best_p, best_f = p, f
        return best_p

    # events: (time, priority, rid-or-seq, kind); departure 0, tick 1, arrival 2
    heap = [(s.arrival, 2, i, "arr") for i, s in enumerate(stream)]
    heapq.heapify(heap)
    tick_pending = False
    used = 0
    last = 0.0

    while heap:
        now, _, key, kind = heapq.heappop(heap)
        out.slot_time += used * (min(now, horizon) - min(last, horizon))
        last = max(last, now)
        if kind == "dep":
            r = reqs.pop(key)
            b_ave = sizes[r["prof"].ave - 1]
            if average(r, now) >= b_ave - 1e-9 * b_ave:
                out.realized += 1
            drop(r["path"], r["cell"])
            used -= r["size"] * len(r["path"])
        elif kind == "tick":
            tick_pending = False
            before = {rid: r["size"] for rid, r in reqs.items()}
            order = sorted(reqs.values(), key=lambda r: (r["admit"] + r["prof"].H, r["rid"]))
            for r in order:
                prof = r["prof"]
                b_ave, b_m, b_M = sizes[prof.ave - 1], sizes[prof.m - 1], sizes[prof.M - 1]
                el = now - r["admit"]
                cur = r["cell"][0]
                if method == "dpm":
                    if r["flag"]:
                        continue
                    b_as, H = r["b_as"], prof.H
                    if b_as == b_ave:
                        r["flag"] = True
                    elif b_as < b_ave:
                        if prof.M > prof.ave and el <= H * (b_M - b_ave) / (b_M - b_as):
                            d = next(d for d in range(prof.ave + 1, prof.M + 1)
                                     if el <= H * (sizes[d - 1] - b_ave) / (sizes[d - 1] - b_as))
                            p = best(r["path"], d, prof.M)
                            if p is not None:
                                move_to(r, p, now)
                                r["flag"] = True
                    else:
                        if H * (b_m - b_ave) / (b_m - b_as) <= el <= H:
                            p = best(r["path"], prof.m, prof.ave)
                            if p is not None:
                                move_to(r, p, now)
                                r["flag"] = True
                elif method == "atm":
                    av = average(r, now)
                    if av > b_ave + margin:
                        need = math.ceil((b_ave * (el + t0) - av * el) / t0)
                        lo = next((p for p in range(prof.m, prof.M + 1) if sizes[p - 1] >= need), prof.M)
                        p = best(r["path"], lo, prof.M, bonus=cur)
                        if p is not None and p != cur:
                            move_to(r, p, now)
                    else:
                        for p in range(prof.M, cur, -1):
                            if free_cells(r["path"], p):
                                move_to(r, p, now)
                                break
            for rid, r in reqs.items():
                used += (r["size"] - before[rid]) * len(r["path"])
            if reqs:
                heapq.heappush(heap, ((round(now / t0) + 1) * t0, 1, -1, "tick"))
                tick_pending = True
        else:
            prof = stream[key]
            out.offered += 1
            paths = link_paths[prof.route]
            lo, hi = prof.m, prof.M
            if routing == "pbr":
                score = [sum(len(free_cells(pa, p)) for p in range(lo, hi + 1)) for pa in paths]
            else:
                score = [sum(len(free_cells(pa, p)) * sizes[p - 1] for p in range(1, N + 1)) for pa in paths]
            if not score or max(score) == 0:
                out.blocked_routing += 1
            else:
                path = paths[score.index(max(score))]
                p = next((p for p in range(hi, lo - 1, -1) if free_cells(path, p)), None)
                if p is None:
                    out.blocked_assignment += 1
                else:
                    cell = free_cells(path, p)[0]
                    take(key, path, cell)
                    size = sizes[p - 1]
                    reqs[key] = dict(rid=key, prof=prof, path=path, cell=cell, size=size, b_as=size,
                                     admit=now, seg=now, area=0.0, flag=False)
                    used += size * len(path)
                    out.admitted += 1
                    heapq.heappush(heap, (now + prof.H, 0, key, "dep"))
        if method != "none" and reqs and not tick_pending:
            heapq.heappush(heap, ((math.floor(now / t0) + 1) * t0, 1, -1, "tick"))
            tick_pending = True
    return out
