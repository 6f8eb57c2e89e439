# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trial loop.

Mirrors ``engine.simulate_python`` decision for decision: same event tie
order, same routing/assignment/reallocation rules and the same floating-point
expressions, so both backends return identical counters for the same stream.
Occupancy is a per-link bitset over bins (64 bins per word).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, INFINITY
from libc.stdint cimport uint64_t, int32_t
from libc.stdlib cimport malloc, calloc, free
from libc.string cimport memmove

cnp.import_array()

cdef extern from *:
    int popcount64 "__builtin_popcountll"(unsigned long long) nogil
    int ctz64 "__builtin_ctzll"(unsigned long long) nogil


cdef struct Core:
    int W
    int N
    int n_cells
    uint64_t* busy       # n_links * W
    uint64_t* pmask      # N * W
    uint64_t* full       # W
    uint64_t* free_buf   # W
    int* counts          # N
    const int32_t* sizes
    const int32_t* off
    const int32_t* path_start
    const int32_t* links


cdef inline void path_free(Core* c, int path) noexcept nogil:
    cdef int w, j
    cdef uint64_t acc
    cdef int a = c.path_start[path]
    cdef int b = c.path_start[path + 1]
    for w in range(c.W):
        acc = 0
        for j in range(a, b):
            acc |= c.busy[c.links[j] * c.W + w]
        c.free_buf[w] = (~acc) & c.full[w]


cdef inline void free_counts(Core* c) noexcept nogil:
    cdef int p, w, s
    for p in range(c.N):
        s = 0
        for w in range(c.W):
            s += popcount64(c.free_buf[w] & c.pmask[p * c.W + w])
        c.counts[p] = s


cdef inline int first_free(Core* c, int pnum) noexcept nogil:
    # pnum is 1-based; uses free_buf of the last path_free call
    cdef int w
    cdef uint64_t x
    for w in range(c.W):
        x = c.free_buf[w] & c.pmask[(pnum - 1) * c.W + w]
        if x:
            return w * 64 + ctz64(x)
    return -1


cdef inline void set_cell(Core* c, int path, int cell, bint on) noexcept nogil:
    cdef int j
    cdef int w = cell >> 6
    cdef uint64_t bit = (<uint64_t>1) << (cell & 63)
    for j in range(c.path_start[path], c.path_start[path + 1]):
        if on:
            c.busy[c.links[j] * c.W + w] |= bit
        else:
            c.busy[c.links[j] * c.W + w] &= ~bit


cdef inline int best_partition(Core* c, int lo, int hi, int bonus_p) noexcept nogil:
    cdef int p, f, best = 0, best_f = 0
    for p in range(lo, hi + 1):
        f = c.counts[p - 1] + (1 if p == bonus_p else 0)
        if f > best_f:
            best = p
            best_f = f
    return best


def simulate(
    const double[::1] arrival,
    const double[::1] holding,
    const int32_t[::1] route,
    const int32_t[::1] pm,
    const int32_t[::1] pave,
    const int32_t[::1] pM,
    const int32_t[::1] route_start,
    const int32_t[::1] path_start,
    const int32_t[::1] links,
    const int32_t[::1] sizes,
    const int32_t[::1] off,
    int n_links,
    double t0,
    double margin,
    int method,
    int routing,
    int warmup,
):
    """Run one trial; returns (offered, admitted, blocked_routing,
    blocked_assignment, realized, moves, slot_time, horizon)."""
    cdef int n = arrival.shape[0]
    cdef int N = sizes.shape[0]
    cdef int n_cells = off[N]
    cdef int W = (n_cells + 63) // 64 if n_cells > 0 else 1
    cdef Core c
    cdef int p, w, cell, i, j, k
    c.W = W
    c.N = N
    c.n_cells = n_cells
    c.sizes = &sizes[0]
    c.off = &off[0]
    c.path_start = &path_start[0]
    c.links = &links[0]
    c.busy = <uint64_t*>calloc(n_links * W, sizeof(uint64_t))
    c.pmask = <uint64_t*>calloc(N * W, sizeof(uint64_t))
    c.full = <uint64_t*>calloc(W, sizeof(uint64_t))
    c.free_buf = <uint64_t*>calloc(W, sizeof(uint64_t))
    c.counts = <int*>calloc(N, sizeof(int))
    for p in range(N):
        for cell in range(off[p], off[p + 1]):
            c.pmask[p * W + (cell >> 6)] |= (<uint64_t>1) << (cell & 63)
            c.full[cell >> 6] |= (<uint64_t>1) << (cell & 63)

    # per-request state
    cdef int32_t* r_path = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef int32_t* r_cell = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef int32_t* r_pnum = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef int32_t* r_size = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef int32_t* r_bas = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef char* r_flag = <char*>calloc(max(n, 1), sizeof(char))
    cdef double* r_admit = <double*>malloc(max(n, 1) * sizeof(double))
    cdef double* r_dep = <double*>malloc(max(n, 1) * sizeof(double))
    cdef double* r_area = <double*>malloc(max(n, 1) * sizeof(double))
    cdef double* r_seg = <double*>malloc(max(n, 1) * sizeof(double))
    cdef int32_t* act = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef int n_act = 0

    cdef long long offered = 0, admitted = 0, blocked_r = 0, blocked_a = 0, realized = 0, moves = 0
    cdef double slot_time = 0.0
    cdef double horizon = arrival[n - 1] if n > 0 else 0.0
    cdef long long used = 0
    cdef double last = 0.0, now, ta, td, tt, av, elapsed, b_ave, s_min, dp, dep
    cdef long long tick_n = -1
    cdef int kind, rid, ai = 0, r, best, npaths, pa, best_path, lo_, hi_, plen, d, newp, need
    cdef long long s, best_s
    cdef bint spr_on = method != 0
    cdef int lo_b, hi_b, mid

    try:
        while True:
            ta = arrival[ai] if ai < n else INFINITY
            td = r_dep[act[0]] if n_act > 0 else INFINITY
            tt = tick_n * t0 if tick_n >= 0 else INFINITY
            if ta == INFINITY and td == INFINITY and tt == INFINITY:
                break
            if td <= tt and td <= ta:
                now = td
                kind = 0
            elif tt <= ta:
                now = tt
                kind = 1
            else:
                now = ta
                kind = 2
            if now > last:
                slot_time += used * (min(now, horizon) - min(last, horizon))
                last = now

            if kind == 0:
                rid = act[0]
                n_act -= 1
                memmove(act, act + 1, n_act * sizeof(int32_t))
                b_ave = sizes[pave[rid] - 1]
                elapsed = now - r_admit[rid]
                if elapsed <= 0:
                    av = r_size[rid]
                else:
                    av = (r_area[rid] + r_size[rid] * (now - r_seg[rid])) / elapsed
                if av >= b_ave - 1e-9 * b_ave and rid >= warmup:
                    realized += 1
                set_cell(&c, r_path[rid], r_cell[rid], False)
                used -= r_size[rid] * (path_start[r_path[rid] + 1] - path_start[r_path[rid]])

            elif kind == 1:
                for k in range(n_act):
                    rid = act[k]
                    b_ave = sizes[pave[rid] - 1]
                    elapsed = now - r_admit[rid]
                    newp = 0
                    if method == 1:
                        if r_flag[rid]:
                            continue
                        if r_bas[rid] == b_ave:
                            r_flag[rid] = 1
                            continue
                        if r_bas[rid] < b_ave:
                            if pM[rid] <= pave[rid]:
                                continue
                            dp = holding[rid] * (sizes[pM[rid] - 1] - b_ave) / (sizes[pM[rid] - 1] - r_bas[rid])
                            if elapsed > dp:
                                continue
                            d = pave[rid] + 1
                            while elapsed > holding[rid] * (sizes[d - 1] - b_ave) / (sizes[d - 1] - r_bas[rid]):
                                d += 1
                            path_free(&c, r_path[rid])
                            free_counts(&c)
                            newp = best_partition(&c, d, pM[rid], 0)
                        else:
                            dp = holding[rid] * (sizes[pm[rid] - 1] - b_ave) / (sizes[pm[rid] - 1] - r_bas[rid])
                            if not (dp <= elapsed and elapsed <= holding[rid]):
                                continue
                            path_free(&c, r_path[rid])
                            free_counts(&c)
                            newp = best_partition(&c, pm[rid], pave[rid], 0)
                        if newp:
                            r_flag[rid] = 1
                    elif method == 2:
                        if elapsed <= 0:
                            av = r_size[rid]
                        else:
                            av = (r_area[rid] + r_size[rid] * (now - r_seg[rid])) / elapsed
                        path_free(&c, r_path[rid])
                        if av > b_ave + margin:
                            s_min = (b_ave * (elapsed + t0) - av * elapsed) / t0
                            need = <int>ceil(s_min) if s_min > -1e9 else -1000000000
                            lo_ = pM[rid]
                            for p in range(pm[rid], pM[rid] + 1):
                                if sizes[p - 1] >= need:
                                    lo_ = p
                                    break
                            free_counts(&c)
                            newp = best_partition(&c, lo_, pM[rid], r_pnum[rid])
                            if newp == r_pnum[rid]:
                                newp = 0
                        else:
                            p = pM[rid]
                            while p > r_pnum[rid]:
                                if first_free(&c, p) >= 0:
                                    newp = p
                                    break
                                p -= 1
                    if newp:
                        # path_free of this request is still in free_buf
                        cell = first_free(&c, newp)
                        set_cell(&c, r_path[rid], r_cell[rid], False)
                        set_cell(&c, r_path[rid], cell, True)
                        plen = path_start[r_path[rid] + 1] - path_start[r_path[rid]]
                        used += (sizes[newp - 1] - r_size[rid]) * plen
                        r_area[rid] += r_size[rid] * (now - r_seg[rid])
                        r_seg[rid] = now
                        r_cell[rid] = cell
                        r_pnum[rid] = newp
                        r_size[rid] = sizes[newp - 1]
                        moves += 1
                tick_n = tick_n + 1 if n_act > 0 else -1

            else:
                rid = ai
                ai += 1
                if rid >= warmup:
                    offered += 1
                pa = route_start[route[rid]]
                npaths = route_start[route[rid] + 1] - pa
                best_path = -1
                best_s = 0
                for j in range(npaths):
                    path_free(&c, pa + j)
                    free_counts(&c)
                    s = 0
                    if routing == 1:
                        for p in range(N):
                            s += c.counts[p] * sizes[p]
                    else:
                        for p in range(pm[rid] - 1, pM[rid]):
                            s += c.counts[p]
                    if j == 0 or s > best_s:
                        best_s = s
                        best_path = j
                if npaths == 0 or best_s <= 0:
                    if rid >= warmup:
                        blocked_r += 1
                else:
                    path_free(&c, pa + best_path)
                    cell = -1
                    p = pM[rid]
                    while p >= pm[rid]:
                        cell = first_free(&c, p)
                        if cell >= 0:
                            break
                        p -= 1
                    if cell < 0:
                        if rid >= warmup:
                            blocked_a += 1
                    else:
                        set_cell(&c, pa + best_path, cell, True)
                        r_path[rid] = pa + best_path
                        r_cell[rid] = cell
                        r_pnum[rid] = p
                        r_size[rid] = sizes[p - 1]
                        r_bas[rid] = sizes[p - 1]
                        r_admit[rid] = now
                        r_dep[rid] = now + holding[rid]
                        r_area[rid] = 0.0
                        r_seg[rid] = now
                        # insert keeping (departure, rid) order
                        dep = r_dep[rid]
                        lo_b = 0
                        hi_b = n_act
                        while lo_b < hi_b:
                            mid = (lo_b + hi_b) >> 1
                            if r_dep[act[mid]] < dep or (r_dep[act[mid]] == dep and act[mid] < rid):
                                lo_b = mid + 1
                            else:
                                hi_b = mid
                        memmove(act + lo_b + 1, act + lo_b, (n_act - lo_b) * sizeof(int32_t))
                        act[lo_b] = rid
                        n_act += 1
                        used += r_size[rid] * (path_start[pa + best_path + 1] - path_start[pa + best_path])
                        if rid >= warmup:
                            admitted += 1
            if spr_on and tick_n < 0 and n_act > 0:
                tick_n = <long long>floor(now / t0) + 1
    finally:
        free(c.busy); free(c.pmask); free(c.full); free(c.free_buf); free(c.counts)
        free(r_path); free(r_cell); free(r_pnum); free(r_size); free(r_bas); free(r_flag)
        free(r_admit); free(r_dep); free(r_area); free(r_seg); free(act)

    return (offered, admitted, blocked_r, blocked_a, realized, moves, slot_time, horizon)
