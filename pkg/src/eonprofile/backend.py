"""Backend selection for the trial loop.

The compiled core (``eonprofile._core``) is used when it was built; otherwise
trials run on the pure-Python loop in :mod:`eonprofile.engine`. Set
``EONPROFILE_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

AVAILABLE = ("compiled", "python") if _core is not None else ("python",)
DEFAULT = os.environ.get("EONPROFILE_BACKEND", AVAILABLE[0])


def resolve(name: str | None) -> str:
    name = name or DEFAULT
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _core is None:
        raise RuntimeError("compiled backend requested but eonprofile._core is not built")
    return name


def pack_paths(ctx, routes):
    """Flatten per-route path lists into CSR-style index arrays."""
    route_start = [0]
    path_start = [0]
    links: list[int] = []
    for route in routes:
        for p in ctx.paths[route]:
            links.extend(p)
            path_start.append(len(links))
        route_start.append(len(path_start) - 1)
    return (
        np.asarray(route_start, dtype=np.int32),
        np.asarray(path_start, dtype=np.int32),
        np.asarray(links, dtype=np.int32),
    )


def simulate_compiled(ctx, stream, scenario):
    from .engine import TrialStats

    routes = list(ctx.paths)
    route_id = {r: i for i, r in enumerate(routes)}
    route_start, path_start, links = pack_paths(ctx, routes)
    plan = ctx.plan
    cfg = scenario.scheduler()
    n = len(stream)
    arrival = np.fromiter((p.arrival for p in stream), dtype=np.float64, count=n)
    holding = np.fromiter((p.H for p in stream), dtype=np.float64, count=n)
    rid = np.fromiter((route_id[p.route] for p in stream), dtype=np.int32, count=n)
    prof = np.array([(p.m, p.ave, p.M) for p in stream], dtype=np.int32).reshape(n, 3)
    out = _core.simulate(
        arrival, holding, rid,
        np.ascontiguousarray(prof[:, 0]), np.ascontiguousarray(prof[:, 1]), np.ascontiguousarray(prof[:, 2]),
        route_start, path_start, links,
        np.asarray(plan.bin_sizes, dtype=np.int32),
        np.asarray(plan.cell_offsets(), dtype=np.int32),
        ctx.n_links,
        cfg.t0, cfg.margin,
        {"none": 0, "dpm": 1, "atm": 2}[cfg.method],
        {"pbr": 0, "llr": 1}[scenario.routing],
        scenario.warmup,
    )
    st = TrialStats(capacity=plan.total_slots * ctx.n_links)
    (st.offered, st.admitted, st.blocked_routing, st.blocked_assignment,
     st.realized, st.moves, st.slot_time, st.horizon) = out
    return st
