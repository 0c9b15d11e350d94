"""Directed street networks with travel-time shortest paths.

Nodes carry planar coordinates (lat, lon); edges carry positive travel
seconds and meters.  Shortest paths are by travel time, with deterministic
lexicographic tie-breaking on the node sequence.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

# Per-source distance arrays are cached without bound up to this node count;
# larger networks keep a bounded FIFO cache instead of a full all-pairs table.
ALL_PAIRS_NODE_LIMIT = 2000
_LARGE_NET_CACHE = 256
# Tolerance for float ties when reconstructing lexicographic routes.
_TIE_EPS = 1e-9


class NetworkError(ValueError):
    """Base class for network construction and query failures."""


class ParseError(NetworkError):
    """Malformed network file line."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class ValidationError(NetworkError):
    """Structural problem with the graph; offending node ids in .nodes."""

    def __init__(self, message: str, nodes: Iterable[int] = ()):
        nodes = tuple(sorted(nodes))
        if nodes:
            message = f"{message}: {list(nodes)}"
        super().__init__(message)
        self.nodes = nodes


class UnknownNodeError(NetworkError):
    """Query referenced a node id that is not in the network."""


class UnreachableError(NetworkError):
    """No path exists between the queried nodes."""


@dataclass(frozen=True)
class Route:
    """A concrete path: node sequence, cumulative seconds at each node, meters."""

    nodes: tuple[int, ...]
    offsets_s: tuple[float, ...]
    length_m: float

    @property
    def travel_time_s(self) -> float:
        return self.offsets_s[-1]

    def __post_init__(self):
        if len(self.nodes) != len(self.offsets_s) or not self.nodes:
            raise ValueError("route nodes and offsets must align and be non-empty")


class StreetNetwork:
    """Immutable directed graph queried by node id."""

    def __init__(
        self,
        nodes: Mapping[int, tuple[float, float]],
        edges: Iterable[tuple[int, int, float, float]],
    ):
        if not nodes:
            raise ValidationError("network has no nodes")
        self._coords = {int(n): (float(x), float(y)) for n, (x, y) in nodes.items()}
        self.nodes: tuple[int, ...] = tuple(sorted(self._coords))
        self._index = {n: i for i, n in enumerate(self.nodes)}
        n_nodes = len(self.nodes)

        edge_list: list[tuple[int, int, float, float]] = []
        fwd: list[list[tuple[int, float, float]]] = [[] for _ in range(n_nodes)]
        rev: list[list[tuple[int, float]]] = [[] for _ in range(n_nodes)]
        for u, v, secs, meters in edges:
            u, v, secs, meters = int(u), int(v), float(secs), float(meters)
            if u not in self._index or v not in self._index:
                missing = [x for x in (u, v) if x not in self._index]
                raise ValidationError("edge references unknown node", missing)
            if secs <= 0 or meters <= 0:
                raise ValidationError(
                    f"edge ({u},{v}) must have positive seconds and meters"
                )
            edge_list.append((u, v, secs, meters))
            fwd[self._index[u]].append((self._index[v], secs, meters))
            rev[self._index[v]].append((self._index[u], secs))
        self.edges: tuple[tuple[int, int, float, float], ...] = tuple(edge_list)
        # Sorted adjacency gives deterministic relaxation order.
        self._fwd = [sorted(a) for a in fwd]
        self._rev = [sorted(a) for a in rev]

        dead = [n for n in self.nodes if not self._fwd[self._index[n]]]
        if dead:
            raise ValidationError("nodes with no outgoing edges", dead)

        self._cache_limit = (
            n_nodes if n_nodes <= ALL_PAIRS_NODE_LIMIT else _LARGE_NET_CACHE
        )
        self._dist_from: dict[int, np.ndarray] = {}
        self._dist_to: dict[int, np.ndarray] = {}
        self._route_cache: dict[tuple[int, int], Route] = {}

    # -- basic queries -------------------------------------------------

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def coord(self, node: int) -> tuple[float, float]:
        self._check(node)
        return self._coords[node]

    def out_edges(self, node: int) -> list[tuple[int, float, float]]:
        """(neighbor id, seconds, meters) sorted by neighbor id."""
        self._check(node)
        return [
            (self.nodes[j], s, m) for j, s, m in self._fwd[self._index[node]]
        ]

    def nearest_node(self, lat: float, lon: float) -> int:
        """Closest node by squared planar distance; ties pick the smaller id."""
        best, best_d = None, math.inf
        for n in self.nodes:
            x, y = self._coords[n]
            d = (x - lat) ** 2 + (y - lon) ** 2
            if d < best_d:
                best, best_d = n, d
        return best

    def _check(self, node: int):
        if node not in self._index:
            raise UnknownNodeError(f"unknown node {node}")

    # -- shortest paths ------------------------------------------------

    def _dijkstra(self, src_idx: int, adj) -> np.ndarray:
        dist = np.full(len(self.nodes), math.inf)
        dist[src_idx] = 0.0
        heap = [(0.0, src_idx)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for row in adj[u]:
                v, secs = row[0], row[1]
                nd = d + secs
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return dist

    def _times_from(self, src: int) -> np.ndarray:
        arr = self._dist_from.get(src)
        if arr is None:
            arr = self._dijkstra(self._index[src], self._fwd)
            self._evict(self._dist_from)
            self._dist_from[src] = arr
        return arr

    def _times_to(self, dst: int) -> np.ndarray:
        arr = self._dist_to.get(dst)
        if arr is None:
            arr = self._dijkstra(self._index[dst], self._rev)
            self._evict(self._dist_to)
            self._dist_to[dst] = arr
        return arr

    def _evict(self, cache: dict):
        while len(cache) >= self._cache_limit:
            cache.pop(next(iter(cache)))

    def shortest_travel_time(self, a: int, b: int) -> float:
        """Seconds along the fastest path, math.inf when unreachable."""
        self._check(a)
        self._check(b)
        return float(self._times_from(a)[self._index[b]])

    def shortest_route(self, a: int, b: int) -> Route:
        """Fastest route from a to b.

        Among equally fast paths, returns the lexicographically smallest node
        sequence: from each node we step to the smallest-id neighbor that still
        lies on some fastest path (ties in travel time within 1e-9 relative).
        Raises UnreachableError when no path exists.
        """
        self._check(a)
        self._check(b)
        key = (a, b)
        cached = self._route_cache.get(key)
        if cached is not None:
            return cached
        if a == b:
            route = Route((a,), (0.0,), 0.0)
            self._route_cache[key] = route
            return route
        dist_to = self._times_to(b)
        total = dist_to[self._index[a]]
        if math.isinf(total):
            raise UnreachableError(f"no path from {a} to {b}")
        nodes = [a]
        offsets = [0.0]
        length = 0.0
        u = a
        while u != b:
            du = dist_to[self._index[u]]
            step = None
            for j, secs, meters in self._fwd[self._index[u]]:
                slack = abs(secs + dist_to[j] - du)
                if slack <= _TIE_EPS * max(1.0, du):
                    step = (self.nodes[j], secs, meters)
                    break  # adjacency sorted by id: first hit is smallest
            if step is None:  # pragma: no cover - guarded by dist consistency
                raise UnreachableError(f"route reconstruction failed at node {u}")
            u = step[0]
            offsets.append(offsets[-1] + step[1])
            length += step[2]
            nodes.append(u)
        route = Route(tuple(nodes), tuple(offsets), length)
        if len(self._route_cache) < 500_000:
            self._route_cache[key] = route
        return route


# -- file I/O ------------------------------------------------------------


def load_network(path: str) -> StreetNetwork:
    """Parse a node/edge text file.

    Lines: ``N <id> <lat> <lon>`` or ``E <from> <to> <seconds> <meters>``.
    Blank lines and text after ``#`` are ignored.  Parse failures raise
    ParseError with the offending line number.
    """
    nodes: dict[int, tuple[float, float]] = {}
    edges: list[tuple[int, int, float, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "N":
                    if len(parts) != 4:
                        raise ValueError("expected: N <id> <lat> <lon>")
                    nid = int(parts[1])
                    if nid in nodes:
                        raise ValueError(f"duplicate node id {nid}")
                    nodes[nid] = (float(parts[2]), float(parts[3]))
                elif parts[0] == "E":
                    if len(parts) != 5:
                        raise ValueError("expected: E <from> <to> <seconds> <meters>")
                    edges.append(
                        (int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4]))
                    )
                else:
                    raise ValueError(f"unknown record type {parts[0]!r}")
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from None
    try:
        return StreetNetwork(nodes, edges)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}", exc.nodes) from None


def save_network(net: StreetNetwork, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        for n in net.nodes:
            x, y = net.coord(n)
            fh.write(f"N {n} {x!r} {y!r}\n")
        for u, v, secs, meters in net.edges:
            fh.write(f"E {u} {v} {secs!r} {meters!r}\n")


def make_grid_network(
    rows: int,
    cols: int,
    edge_seconds: float = 90.0,
    edge_meters: float = 500.0,
) -> StreetNetwork:
    """Synthetic rows x cols lattice, bidirectional 4-neighbor edges.

    Node ids are row*cols+col; coordinates are the unit lattice (lat=row,
    lon=col).
    """
    if rows < 1 or cols < 1:
        raise ValidationError("grid network needs at least one row and column")
    nodes = {
        r * cols + c: (float(r), float(c)) for r in range(rows) for c in range(cols)
    }
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if rr < rows and cc < cols:
                    v = rr * cols + cc
                    edges.append((u, v, edge_seconds, edge_meters))
                    edges.append((v, u, edge_seconds, edge_meters))
    return StreetNetwork(nodes, edges)
