"""Spectrum partition plans.

Two sizing rules are provided. :func:`plan_sip` weights each partition by
the probability that a uniformly drawn request window ``[m, M]`` covers it;
:func:`plan_sp` gives each partition a share proportional to its bin size.
Both compute whole bin counts with exact rationals and then hand out the
leftover slots as extra whole bins.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import floor
from typing import Sequence

# Extra bins per partition that turn the base SIP plan for FS=360, B={1..10}
# into slot counts (5, 14, 24, 32, 40, 48, 56, 56, 45, 40).
PAPER_EXTRA_BINS_360 = (3, 2, 1, 0, 0, 0, 0, 0, 0, 2)


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionPlan:
    """Division of ``total_slots`` into partitions of equal-size bins.

    Partitions are laid out left to right in index order; bins inside a
    partition are numbered left to right. Slots past the last partition
    (fewer than the smallest bin size) are dead.
    """

    total_slots: int
    bin_sizes: tuple[int, ...]
    bin_counts: tuple[int, ...]
    scheme: str = "sip"

    def __post_init__(self):
        if len(self.bin_sizes) != len(self.bin_counts):
            raise PlanError("bin_sizes and bin_counts differ in length")
        if any(c < 0 for c in self.bin_counts):
            raise PlanError("negative bin count")
        if sum(self.slot_counts) > self.total_slots:
            raise PlanError("partitions exceed total slot count")

    @property
    def n(self) -> int:
        return len(self.bin_sizes)

    @property
    def slot_counts(self) -> tuple[int, ...]:
        return tuple(b * c for b, c in zip(self.bin_sizes, self.bin_counts))

    @property
    def dead_slots(self) -> int:
        return self.total_slots - sum(self.slot_counts)

    @property
    def n_cells(self) -> int:
        """Total number of bins across all partitions."""
        return sum(self.bin_counts)

    def slot_range(self, pnum: int) -> tuple[int, int]:
        """1-based inclusive slot range of partition ``pnum`` (empty if end < start)."""
        start = 1 + sum(self.slot_counts[: pnum - 1])
        return start, start + self.slot_counts[pnum - 1] - 1

    def bin_slots(self, pnum: int, bnum: int) -> tuple[int, int]:
        """1-based inclusive slot range of bin ``bnum`` in partition ``pnum``."""
        if not (1 <= pnum <= self.n and 1 <= bnum <= self.bin_counts[pnum - 1]):
            raise PlanError(f"no bin ({pnum}, {bnum}) in plan")
        start, _ = self.slot_range(pnum)
        size = self.bin_sizes[pnum - 1]
        lo = start + (bnum - 1) * size
        return lo, lo + size - 1

    def cell_offsets(self) -> tuple[int, ...]:
        """Cumulative bin counts: bins of partition p occupy cells [off[p-1], off[p])."""
        out = [0]
        for c in self.bin_counts:
            out.append(out[-1] + c)
        return tuple(out)

    def report(self) -> str:
        lines = ["j\tb_j\tNb_j\tFS_j\tslots"]
        for j in range(1, self.n + 1):
            lo, hi = self.slot_range(j)
            span = f"{lo}-{hi}" if hi >= lo else "-"
            lines.append(f"{j}\t{self.bin_sizes[j - 1]}\t{self.bin_counts[j - 1]}\t{self.slot_counts[j - 1]}\t{span}")
        if self.dead_slots:
            lines.append(f"dead\t-\t-\t{self.dead_slots}\t{self.total_slots - self.dead_slots + 1}-{self.total_slots}")
        lines.append(f"total {self.total_slots}")
        return "\n".join(lines)


def contribution_probability(j: int, n: int) -> Fraction:
    """Probability that partition ``j`` lies inside a uniform random window.

    The window ``[x, y]`` with ``1 <= x <= y <= n`` is drawn uniformly from
    its ``n(n+1)/2`` possibilities.
    """
    if n < 1 or not (1 <= j <= n):
        raise ValueError(f"partition index {j} out of range for N={n}")
    return Fraction(2 * j * (n - j + 1), n * (n + 1))


def _check_sizes(bin_sizes: Sequence[int]) -> tuple[int, ...]:
    sizes = tuple(int(b) for b in bin_sizes)
    if not sizes:
        raise PlanError("bin-size set is empty")
    if any(b < 1 for b in sizes):
        raise PlanError("bin sizes must be positive")
    if any(a >= b for a, b in zip(sizes, sizes[1:])):
        raise PlanError("bin sizes must be strictly increasing")
    return sizes


def sip_base_counts(fs: int, bin_sizes: Sequence[int]) -> tuple[int, ...]:
    sizes = _check_sizes(bin_sizes)
    n = len(sizes)
    pc = [contribution_probability(j, n) for j in range(1, n + 1)]
    denom = sum(b * p for b, p in zip(sizes, pc))
    return tuple(floor(Fraction(fs) * p / denom) for p in pc)


def sp_base_counts(fs: int, bin_sizes: Sequence[int]) -> tuple[int, ...]:
    sizes = _check_sizes(bin_sizes)
    total = sum(sizes)
    # target slots fs*b/sum(b) divided by b is fs/sum(b) for every partition
    return tuple(floor(Fraction(fs * b, total) / b) for b in sizes)


def redistribute(
    fs: int, bin_sizes: Sequence[int], counts: Sequence[int], extra_bins: Sequence[int] | None = None
) -> tuple[int, ...]:
    """Hand the slots not covered by ``counts`` out as whole extra bins.

    With ``extra_bins`` the given vector is added verbatim. Otherwise bins are
    added one at a time to the partition with the fewest slots among those
    whose bin still fits in the leftover (ties go to the smaller index).
    """
    sizes = tuple(bin_sizes)
    out = list(counts)
    leftover = fs - sum(b * c for b, c in zip(sizes, out))
    if leftover < 0:
        raise PlanError("base counts exceed the slot budget")
    if extra_bins is not None:
        if len(extra_bins) != len(sizes):
            raise PlanError(f"extra-bin vector has {len(extra_bins)} entries, expected {len(sizes)}")
        if any(e < 0 for e in extra_bins):
            raise PlanError("extra-bin vector entries must be non-negative")
        used = sum(b * e for b, e in zip(sizes, extra_bins))
        if used > leftover:
            raise PlanError(f"extra bins need {used} slots but only {leftover} are left over")
        return tuple(c + e for c, e in zip(out, extra_bins))
    while True:
        fits = [j for j, b in enumerate(sizes) if b <= leftover]
        if not fits:
            break
        j = min(fits, key=lambda i: (sizes[i] * out[i], i))
        out[j] += 1
        leftover -= sizes[j]
    return tuple(out)


def plan_sip(fs: int, bin_sizes: Sequence[int], extra_bins: Sequence[int] | None = None) -> PartitionPlan:
    """Build a spectrum-interval partition plan."""
    sizes = _check_sizes(bin_sizes)
    if fs < max(sizes):
        raise PlanError(f"FS={fs} is smaller than the largest bin size {max(sizes)}")
    counts = redistribute(fs, sizes, sip_base_counts(fs, sizes), extra_bins)
    return PartitionPlan(fs, sizes, counts, "sip")


def plan_sp(fs: int, bin_sizes: Sequence[int], extra_bins: Sequence[int] | None = None) -> PartitionPlan:
    """Build a conventional plan with slots proportional to bin size."""
    sizes = _check_sizes(bin_sizes)
    if fs < max(sizes):
        raise PlanError(f"FS={fs} is smaller than the largest bin size {max(sizes)}")
    counts = redistribute(fs, sizes, sp_base_counts(fs, sizes), extra_bins)
    return PartitionPlan(fs, sizes, counts, "sp")


def make_plan(scheme: str, fs: int, bin_sizes: Sequence[int], extra_bins: Sequence[int] | None = None) -> PartitionPlan:
    scheme = scheme.lower()
    if scheme == "sip":
        return plan_sip(fs, bin_sizes, extra_bins)
    if scheme == "sp":
        return plan_sp(fs, bin_sizes, extra_bins)
    raise PlanError(f"unknown partitioning scheme {scheme!r}")
