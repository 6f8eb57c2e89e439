"""Network topology loading and offline k-shortest-path computation."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import networkx as nx

Link = tuple[str, str]
Path_ = tuple[str, ...]


class TopologyError(ValueError):
    """Raised when topology files are malformed or describe an invalid graph."""


@dataclass(frozen=True)
class Network:
    """An undirected fiber graph where each physical link is a pair of fibers.

    Attributes:
        nodes: Node ids in declaration order.
        links: Physical links as ``(a, b, length_km)``.
        coords: Node coordinates, carried for reporting only.
    """

    nodes: tuple[str, ...]
    links: tuple[tuple[str, str, float], ...]
    coords: dict[str, tuple[float, float]] = field(default_factory=dict, compare=False)

    @property
    def directed_links(self) -> tuple[Link, ...]:
        out: list[Link] = []
        for a, b, _ in self.links:
            out.append((a, b))
            out.append((b, a))
        return tuple(out)

    def link_index(self) -> dict[Link, int]:
        """Map each directed link to a dense index (declaration order, a->b then b->a)."""
        return {lk: i for i, lk in enumerate(self.directed_links)}

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        for a, b, length in self.links:
            g.add_edge(a, b, length=length)
        return g


def _read_rows(path: Path) -> list[tuple[int, list[str]]]:
    rows = []
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p for p in re.split(r"[,\s]+", line) if p]
        rows.append((lineno, parts))
    return rows


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_network(node_file: str | Path, edge_file: str | Path) -> Network:
    """Load and validate a network from a node table and an edge table.

    Node rows are ``id, x, y`` and edge rows ``a, b, length_km``. A header
    row is skipped when its numeric columns do not parse. Fields may be
    separated by commas or whitespace.

    Raises:
        TopologyError: on parse failures, dangling endpoints, duplicate
            edges, non-positive lengths or a disconnected graph.
    """
    nodes: list[str] = []
    coords: dict[str, tuple[float, float]] = {}
    for i, (lineno, parts) in enumerate(_read_rows(node_file)):
        if len(parts) != 3:
            raise TopologyError(f"{node_file}:{lineno}: expected 3 fields (id, x, y), got {len(parts)}")
        nid, x, y = parts
        if not (_is_number(x) and _is_number(y)):
            if i == 0:
                continue
            raise TopologyError(f"{node_file}:{lineno}: non-numeric coordinates {x!r}, {y!r}")
        if nid in coords:
            raise TopologyError(f"{node_file}:{lineno}: duplicate node {nid!r}")
        nodes.append(nid)
        coords[nid] = (float(x), float(y))
    if not nodes:
        raise TopologyError(f"{node_file}: no nodes declared")

    links: list[tuple[str, str, float]] = []
    seen: set[frozenset[str]] = set()
    for i, (lineno, parts) in enumerate(_read_rows(edge_file)):
        if len(parts) != 3:
            raise TopologyError(f"{edge_file}:{lineno}: expected 3 fields (a, b, length_km), got {len(parts)}")
        a, b, length = parts
        if not _is_number(length):
            if i == 0:
                continue
            raise TopologyError(f"{edge_file}:{lineno}: non-numeric length {length!r}")
        for end in (a, b):
            if end not in coords:
                raise TopologyError(f"{edge_file}:{lineno}: edge endpoint {end!r} is not a declared node")
        if a == b:
            raise TopologyError(f"{edge_file}:{lineno}: self-loop on {a!r}")
        value = float(length)
        if not (value > 0 and math.isfinite(value)):
            raise TopologyError(f"{edge_file}:{lineno}: link length must be positive, got {length}")
        key = frozenset((a, b))
        if key in seen:
            raise TopologyError(f"{edge_file}:{lineno}: duplicate edge {a}-{b}")
        seen.add(key)
        links.append((a, b, value))

    net = Network(tuple(nodes), tuple(links), coords)
    if len(nodes) > 1 and not nx.is_connected(net.graph()):
        raise TopologyError("network graph is disconnected")
    return net


def deutsche_telekom() -> Network:
    """The bundled 14-node, 23-link Deutsche Telekom core topology."""
    data = resources.files("eonprofile") / "data"
    with resources.as_file(data / "dt_nodes.csv") as nf, resources.as_file(data / "dt_edges.csv") as ef:
        return load_network(nf, ef)


@dataclass(frozen=True)
class PathTable:
    """Up to ``k`` loopless paths per ordered node pair, shortest first.

    ``paths[(s, d)]`` is a list of node sequences; index 0 corresponds to the
    path numbered 1.
    """

    k: int
    paths: dict[tuple[str, str], list[Path_]]
    lengths: dict[tuple[str, str], list[float]]

    def routes(self) -> list[tuple[str, str]]:
        return list(self.paths)

    def links_of(self, route: tuple[str, str], index: int) -> list[Link]:
        nodes = self.paths[route][index]
        return list(zip(nodes[:-1], nodes[1:]))


def path_length(g: nx.Graph, nodes: Path_) -> float:
    return math.fsum(g[u][v]["length"] for u, v in zip(nodes[:-1], nodes[1:]))


def _k_paths_for_pair(g: nx.Graph, s: str, d: str, k: int) -> list[tuple[float, Path_]]:
    found: list[tuple[float, Path_]] = []
    gen = nx.shortest_simple_paths(g, s, d, weight="length")
    try:
        for p in gen:
            length = path_length(g, tuple(p))
            # keep pulling while lengths tie the k-th path so ordering is lexicographic
            if len(found) >= k and length > found[k - 1][0]:
                break
            found.append((length, tuple(p)))
    except nx.NetworkXNoPath:
        return []
    found.sort()
    return found[:k]


def k_shortest_paths(net: Network, k: int) -> PathTable:
    """Compute up to ``k`` shortest simple paths for every ordered node pair.

    Equal-length paths are ordered by their node-id sequence.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    g = net.graph()
    paths: dict[tuple[str, str], list[Path_]] = {}
    lengths: dict[tuple[str, str], list[float]] = {}
    for s in net.nodes:
        for d in net.nodes:
            if s == d:
                continue
            found = _k_paths_for_pair(g, s, d, k)
            paths[(s, d)] = [p for _, p in found]
            lengths[(s, d)] = [length for length, _ in found]
    return PathTable(k, paths, lengths)


def write_network(net: Network, node_file: str | Path, edge_file: str | Path) -> None:
    with open(node_file, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "x", "y"])
        for n in net.nodes:
            x, y = net.coords.get(n, (0.0, 0.0))
            w.writerow([n, x, y])
    with open(edge_file, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["a", "b", "length_km"])
        for a, b, length in net.links:
            w.writerow([a, b, length])
