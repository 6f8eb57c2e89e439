"""Admission of new requests: path selection and initial bin assignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .occupancy import BinRef, OccupancyStore
from .topology import Network, PathTable

LinkPath = tuple[int, ...]


@dataclass(frozen=True, slots=True)
class ServiceProfile:
    """A request for min/average/max bin sizes over a holding time.

    ``m``, ``ave`` and ``M`` are partition indices (1-based), so the bin sizes
    are ``plan.bin_sizes[m-1]`` and so on.
    """

    m: int
    ave: int
    M: int
    H: float
    source: str = ""
    destination: str = ""
    arrival: float = 0.0

    def __post_init__(self):
        if not (1 <= self.m <= self.ave <= self.M):
            raise ValueError(f"profile indices must satisfy 1 <= m <= Ave <= M, got {(self.m, self.ave, self.M)}")
        if not self.H > 0:
            raise ValueError(f"holding time must be positive, got {self.H}")

    @property
    def route(self) -> tuple[str, str]:
        return (self.source, self.destination)


@dataclass(frozen=True)
class AdmissionResult:
    blocked: str | None = None  # "routing" or "assignment"
    path_index: int = -1
    bin: BinRef | None = None
    size: int = 0

    @property
    def admitted(self) -> bool:
        return self.blocked is None


def compile_paths(net: Network, table: PathTable) -> dict[tuple[str, str], list[LinkPath]]:
    """Translate node-sequence paths into directed-link index tuples."""
    index = net.link_index()
    out = {}
    for route, paths in table.paths.items():
        out[route] = [tuple(index[(u, v)] for u, v in zip(p[:-1], p[1:])) for p in paths]
    return out


def _argmax_first(values: Sequence[int]) -> int:
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def route_llr(request: ServiceProfile, paths: Sequence[LinkPath], occ: OccupancyStore) -> int | None:
    """Least-loaded routing: the path with the most free slots.

    Returns the 0-based path index, or None when every path is full. A path
    with free slots only outside ``[m, M]`` still counts, in which case the
    request blocks later at assignment.
    """
    if not paths:
        return None
    sizes = occ.plan.bin_sizes
    sums = [sum(c * b for c, b in zip(occ.free_counts(p), sizes)) for p in paths]
    best = _argmax_first(sums)
    return best if sums[best] > 0 else None


def route_pbr(request: ServiceProfile, paths: Sequence[LinkPath], occ: OccupancyStore) -> int | None:
    """Profile-based routing: the path with the most free bins in ``[m, M]``."""
    if not paths:
        return None
    lo, hi = request.m - 1, request.M
    sums = [sum(occ.free_counts(p)[lo:hi]) for p in paths]
    best = _argmax_first(sums)
    return best if sums[best] > 0 else None


ROUTERS = {"llr": route_llr, "pbr": route_pbr}


def assign_initial(request: ServiceProfile, path: LinkPath, occ: OccupancyStore) -> BinRef | None:
    """First-fit bin of the largest partition in ``[m, M]`` free along ``path``.

    Only picks the bin; the caller occupies it.
    """
    for p in range(request.M, request.m - 1, -1):
        ref = occ.first_free(path, p)
        if ref is not None:
            return ref
    return None


def admit(
    rid: int, request: ServiceProfile, paths: Sequence[LinkPath], occ: OccupancyStore, routing: str = "pbr"
) -> AdmissionResult:
    """Route, assign and occupy in one step."""
    idx = ROUTERS[routing](request, paths, occ)
    if idx is None:
        return AdmissionResult(blocked="routing")
    ref = assign_initial(request, paths[idx], occ)
    if ref is None:
        return AdmissionResult(blocked="assignment")
    occ.occupy(rid, paths[idx], ref)
    return AdmissionResult(path_index=idx, bin=ref, size=occ.plan.bin_sizes[ref.pnum - 1])
