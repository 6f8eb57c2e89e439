"""Per-link bin occupancy.

Each directed link keeps a busy bitmask with one bit per bin ("cell") of the
partition plan; cell ``off[p-1] + (b-1)`` is bin ``b`` of partition ``p``.
A request always holds the same cell on every link of its path, which gives
spectrum continuity, and a bin is a contiguous slot range by construction.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple, Sequence

from .partition import PartitionPlan


class BinRef(NamedTuple):
    pnum: int
    bnum: int


class OccupancyError(RuntimeError):
    """An allocation conflict or reference to an unknown request/link."""


class OccupancyStore:
    def __init__(self, plan: PartitionPlan, n_links: int):
        self.plan = plan
        self.n_links = n_links
        self._off = plan.cell_offsets()
        self._cell_part = [p for p in range(1, plan.n + 1) for _ in range(plan.bin_counts[p - 1])]
        self.full_mask = (1 << plan.n_cells) - 1
        # partition_masks[p-1] selects the cells of partition p
        self.partition_masks = [((1 << (self._off[p] - self._off[p - 1])) - 1) << self._off[p - 1] for p in range(1, plan.n + 1)]
        self._busy = [0] * n_links
        self._owner: dict[tuple[int, int], int] = {}
        self._held: dict[int, tuple[tuple[int, ...], int]] = {}

    # -- addressing -------------------------------------------------------

    def cell_of(self, ref: BinRef) -> int:
        p, b = ref
        if not (1 <= p <= self.plan.n and 1 <= b <= self.plan.bin_counts[p - 1]):
            raise OccupancyError(f"bin {tuple(ref)} does not exist in the plan")
        return self._off[p - 1] + b - 1

    def ref_of(self, cell: int) -> BinRef:
        p = self._cell_part[cell]
        return BinRef(p, cell - self._off[p - 1] + 1)

    def _check_links(self, links: Sequence[int]) -> None:
        if not links:
            raise OccupancyError("empty path")
        for lk in links:
            if not (0 <= lk < self.n_links):
                raise OccupancyError(f"unknown link {lk}")

    # -- queries ----------------------------------------------------------

    def free_mask(self, links: Sequence[int]) -> int:
        busy = 0
        for lk in links:
            busy |= self._busy[lk]
        return self.full_mask & ~busy

    def ubv(self, links: Sequence[int]) -> set[BinRef]:
        """Bins free on every link of ``links``."""
        self._check_links(links)
        free = self.free_mask(links)
        out = set()
        while free:
            low = free & -free
            out.add(self.ref_of(low.bit_length() - 1))
            free ^= low
        return out

    def obv(self, links: Sequence[int]) -> set[BinRef]:
        """Bins busy on at least one link of ``links``."""
        self._check_links(links)
        busy = self.full_mask & ~self.free_mask(links)
        return {self.ref_of(c) for c in range(self.plan.n_cells) if busy >> c & 1}

    def free_counts(self, links: Sequence[int]) -> list[int]:
        """Free-bin count per partition (index 0 is partition 1)."""
        free = self.free_mask(links)
        return [(free & pm).bit_count() for pm in self.partition_masks]

    def first_free(self, links: Sequence[int], pnum: int) -> BinRef | None:
        """Lowest-numbered bin of ``pnum`` free on all ``links``, or None."""
        x = self.free_mask(links) & self.partition_masks[pnum - 1]
        if not x:
            return None
        return self.ref_of((x & -x).bit_length() - 1)

    def is_busy(self, link: int, ref: BinRef) -> bool:
        return bool(self._busy[link] >> self.cell_of(ref) & 1)

    def owner(self, link: int, ref: BinRef) -> int | None:
        return self._owner.get((link, self.cell_of(ref)))

    def holding(self, rid: int) -> BinRef:
        try:
            return self.ref_of(self._held[rid][1])
        except KeyError:
            raise OccupancyError(f"request {rid} holds no bin") from None

    def path_of(self, rid: int) -> tuple[int, ...]:
        return self._held[rid][0]

    def active(self) -> list[int]:
        return list(self._held)

    def is_empty(self) -> bool:
        return not self._held and not any(self._busy)

    def busy_cell_total(self) -> int:
        return sum(m.bit_count() for m in self._busy)

    # -- mutation ---------------------------------------------------------

    def _take(self, rid: int, links: Iterable[int], cell: int) -> None:
        bit = 1 << cell
        for lk in links:
            self._busy[lk] |= bit
            self._owner[(lk, cell)] = rid

    def _drop(self, links: Iterable[int], cell: int) -> None:
        bit = 1 << cell
        for lk in links:
            self._busy[lk] &= ~bit
            del self._owner[(lk, cell)]

    def occupy(self, rid: int, links: Sequence[int], ref: BinRef) -> None:
        self._check_links(links)
        if rid in self._held:
            raise OccupancyError(f"request {rid} already holds a bin")
        cell = self.cell_of(ref)
        if not self.free_mask(links) >> cell & 1:
            raise OccupancyError(f"bin {tuple(ref)} is not free on the whole path of request {rid}")
        links = tuple(links)
        self._take(rid, links, cell)
        self._held[rid] = (links, cell)

    def release(self, rid: int) -> BinRef:
        try:
            links, cell = self._held.pop(rid)
        except KeyError:
            raise OccupancyError(f"unknown request {rid}") from None
        self._drop(links, cell)
        return self.ref_of(cell)

    def move(self, rid: int, ref: BinRef) -> None:
        """Swap request ``rid`` to ``ref`` on its fixed path in one step."""
        try:
            links, old = self._held[rid]
        except KeyError:
            raise OccupancyError(f"unknown request {rid}") from None
        cell = self.cell_of(ref)
        if cell == old:
            return
        if not self.free_mask(links) >> cell & 1:
            raise OccupancyError(f"cannot move request {rid}: bin {tuple(ref)} is busy on its path")
        self._drop(links, old)
        self._take(rid, links, cell)
        self._held[rid] = (links, cell)

    # -- reporting --------------------------------------------------------

    def snapshot(self) -> dict[int, list[BinRef]]:
        out = {}
        for lk, m in enumerate(self._busy):
            if m:
                out[lk] = [self.ref_of(c) for c in range(self.plan.n_cells) if m >> c & 1]
        return out

    def dump(self, link_names: Sequence[tuple[str, str]] | None = None) -> str:
        rows = ["link\tpnum\tbnum\towner"]
        for lk, refs in self.snapshot().items():
            name = f"{link_names[lk][0]}->{link_names[lk][1]}" if link_names else str(lk)
            for r in refs:
                rows.append(f"{name}\t{r.pnum}\t{r.bnum}\t{self._owner[(lk, self.cell_of(r))]}")
        return "\n".join(rows)
