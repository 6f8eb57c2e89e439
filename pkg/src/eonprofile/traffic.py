"""Stochastic workload: Poisson arrivals, exponential holding, uniform profiles."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .rsa import ServiceProfile

RNG_NAME = "numpy.PCG64/SeedSequence"


@dataclass(frozen=True)
class TrafficConfig:
    load: float
    mean_holding: float = 1.0
    requests: int = 100_000
    n_partitions: int = 10
    vf: int | None = None
    seed: int | np.random.SeedSequence = 0

    def __post_init__(self):
        if not self.load > 0:
            raise ValueError(f"load must be positive, got {self.load}")
        if not self.mean_holding > 0:
            raise ValueError(f"mean holding time must be positive, got {self.mean_holding}")
        if self.requests < 0:
            raise ValueError("request count must be non-negative")
        if self.n_partitions < 1:
            raise ValueError("need at least one partition")
        if self.vf is not None and not (1 <= self.vf <= max(self.n_partitions - 1, 1)):
            raise ValueError(f"VF must be in [1, N-1], got {self.vf}")

    @property
    def arrival_rate(self) -> float:
        return self.load / self.mean_holding


def profile_triples(rng: np.random.Generator, count: int, n: int, vf: int | None = None) -> np.ndarray:
    """``count`` sorted triples of iid uniform draws on {1..n}, rejection-limited by ``vf``."""
    out = np.empty((0, 3), dtype=np.int64)
    while len(out) < count:
        need = count - len(out)
        batch = np.sort(rng.integers(1, n + 1, size=(max(need, 1024), 3)), axis=1)
        if vf is not None:
            ok = (batch[:, 2] - batch[:, 1] <= vf) & (batch[:, 1] - batch[:, 0] <= vf)
            batch = batch[ok]
        out = np.concatenate([out, batch[:need]])
    return out


def generate_stream(cfg: TrafficConfig, nodes: Sequence[str]) -> list[ServiceProfile]:
    """Draw the full request stream of one trial, in arrival order."""
    if len(nodes) < 2:
        raise ValueError("need at least two nodes to route traffic")
    rng = np.random.default_rng(cfg.seed)
    count = cfg.requests
    gaps = rng.exponential(1.0 / cfg.arrival_rate, size=count)
    arrivals = np.cumsum(gaps)
    holding = rng.exponential(cfg.mean_holding, size=count)
    src = rng.integers(0, len(nodes), size=count)
    dst = rng.integers(0, len(nodes) - 1, size=count)
    dst = dst + (dst >= src)
    triples = profile_triples(rng, count, cfg.n_partitions, cfg.vf)
    return [
        ServiceProfile(int(a), int(v), int(b), float(h), nodes[s], nodes[d], float(t))
        for (a, v, b), h, s, d, t in zip(triples.tolist(), holding.tolist(), src.tolist(), dst.tolist(), arrivals.tolist())
    ]


def dump_stream(stream: Sequence[ServiceProfile], path: str | Path) -> None:
    """Write one request per line: arrival, src, dst, m, Ave, M, H."""
    with open(path, "w") as f:
        f.write("arrival,src,dst,m,Ave,M,H\n")
        for p in stream:
            f.write(f"{p.arrival!r},{p.source},{p.destination},{p.m},{p.ave},{p.M},{p.H!r}\n")


def load_stream(path: str | Path) -> list[ServiceProfile]:
    out = []
    with open(path) as f:
        header = f.readline()
        if not header.startswith("arrival"):
            raise ValueError(f"{path}: missing stream header")
        for lineno, line in enumerate(f, 2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise ValueError(f"{path}:{lineno}: expected 7 fields")
            t, s, d, m, a, mx, h = parts
            out.append(ServiceProfile(int(m), int(a), int(mx), float(h), s, d, float(t)))
    return out
