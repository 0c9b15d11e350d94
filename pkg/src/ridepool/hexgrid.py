"""Hexagonal region overlay in axial coordinates.

Regions tile the service area; each network node maps to exactly one region.
Ring-1/ring-2 neighborhoods (truncated at the boundary) define the ordered
action set used by the dispatcher: [self, ring-1 ascending, ring-2 ascending],
at most 19 entries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .network import StreetNetwork

AXIAL_DIRECTIONS = ((1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1))
MAX_ACTIONS = 19
DEFAULT_DIAMETER_KM = 0.36


class GridError(ValueError):
    """Invalid region layout or node mapping."""


class GridParseError(GridError):
    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


def axial_distance(a: tuple[int, int], b: tuple[int, int]) -> int:
    dq = a[0] - b[0]
    dr = a[1] - b[1]
    return (abs(dq) + abs(dr) + abs(dq + dr)) // 2


@dataclass(frozen=True)
class ActionSet:
    """Ordered dispatch targets for one region: self, ring-1, ring-2."""

    regions: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.regions)

    def __contains__(self, region: int) -> bool:
        return region in self.regions

    def index_of(self, region: int) -> int:
        return self.regions.index(region)


class HexGrid:
    """Region lattice plus a total node->region map."""

    def __init__(
        self,
        axial: Mapping[int, tuple[int, int]],
        node_region: Mapping[int, int],
        diameter_km: float = DEFAULT_DIAMETER_KM,
    ):
        if not axial:
            raise GridError("grid has no regions")
        if diameter_km <= 0:
            raise GridError("region diameter must be positive")
        self.diameter_km = float(diameter_km)
        self._axial = {int(r): (int(q), int(s)) for r, (q, s) in axial.items()}
        self.regions: tuple[int, ...] = tuple(sorted(self._axial))
        seen: dict[tuple[int, int], int] = {}
        for r in self.regions:
            qs = self._axial[r]
            if qs in seen:
                raise GridError(
                    f"regions {seen[qs]} and {r} share axial coordinate {qs}"
                )
            seen[qs] = r

        self._node_region = {int(n): int(r) for n, r in node_region.items()}
        for n, r in self._node_region.items():
            if r not in self._axial:
                raise GridError(f"node {n} mapped to unknown region {r}")
        by_region: dict[int, list[int]] = {r: [] for r in self.regions}
        for n in sorted(self._node_region):
            by_region[self._node_region[n]].append(n)
        self._region_nodes = {r: tuple(ns) for r, ns in by_region.items()}

        # Rings by axial distance; boundary regions simply have fewer members.
        self._ring1: dict[int, tuple[int, ...]] = {}
        self._ring2: dict[int, tuple[int, ...]] = {}
        self._action_sets: dict[int, ActionSet] = {}
        for r in self.regions:
            r1, r2 = [], []
            for other in self.regions:
                d = axial_distance(self._axial[r], self._axial[other])
                if d == 1:
                    r1.append(other)
                elif d == 2:
                    r2.append(other)
            self._ring1[r] = tuple(r1)
            self._ring2[r] = tuple(r2)
            self._action_sets[r] = ActionSet((r, *r1, *r2))

    def __len__(self) -> int:
        return len(self.regions)

    def axial(self, region: int) -> tuple[int, int]:
        self._check(region)
        return self._axial[region]

    def ring(self, region: int, k: int) -> tuple[int, ...]:
        self._check(region)
        if k == 0:
            return (region,)
        if k == 1:
            return self._ring1[region]
        if k == 2:
            return self._ring2[region]
        raise GridError(f"ring distance {k} not supported")

    def action_set(self, region: int) -> ActionSet:
        self._check(region)
        return self._action_sets[region]

    def region_of(self, node: int) -> int:
        try:
            return self._node_region[node]
        except KeyError:
            raise GridError(f"node {node} has no region") from None

    def nodes_of(self, region: int) -> tuple[int, ...]:
        self._check(region)
        return self._region_nodes[region]

    def anchor_node(self, region: int) -> int | None:
        """Deterministic reposition target: lowest-id node, None if empty."""
        nodes = self.nodes_of(region)
        return nodes[0] if nodes else None

    def _check(self, region: int):
        if region not in self._axial:
            raise GridError(f"unknown region {region}")


def build_synthetic_grid(
    rows: int,
    cols: int,
    net: StreetNetwork,
    diameter_km: float = DEFAULT_DIAMETER_KM,
) -> HexGrid:
    """Lay a rows x cols hex patch over the network bounding box.

    Region ids run row-major.  Axial coordinates come from odd-r offset rows,
    centers are scaled affinely onto the node coordinate bounding box, and each
    node joins its nearest center (ties to the smaller region id).
    """
    if rows < 1 or cols < 1:
        raise GridError("hex grid needs at least one row and column")
    axial: dict[int, tuple[int, int]] = {}
    centers: dict[int, tuple[float, float]] = {}
    for row in range(rows):
        for col in range(cols):
            rid = row * cols + col
            q = col - row // 2
            axial[rid] = (q, row)
            # Pointy-top unit geometry before scaling.
            centers[rid] = (1.5 * row, math.sqrt(3.0) * (q + row / 2.0))

    lats = [net.coord(n)[0] for n in net.nodes]
    lons = [net.coord(n)[1] for n in net.nodes]
    cy = [centers[r][0] for r in sorted(centers)]
    cx = [centers[r][1] for r in sorted(centers)]

    def rescale(vals, lo, hi):
        vmin, vmax = min(vals), max(vals)
        span = vmax - vmin
        if span == 0 or hi == lo:
            mid = (lo + hi) / 2.0
            return [mid for _ in vals]
        return [lo + (v - vmin) * (hi - lo) / span for v in vals]

    sy = rescale(cy, min(lats), max(lats))
    sx = rescale(cx, min(lons), max(lons))
    scaled = {r: (sy[i], sx[i]) for i, r in enumerate(sorted(centers))}

    node_region: dict[int, int] = {}
    for n in net.nodes:
        y, x = net.coord(n)
        best, best_d = None, math.inf
        for r in sorted(scaled):
            ry, rx = scaled[r]
            d = (ry - y) ** 2 + (rx - x) ** 2
            if d < best_d:
                best, best_d = r, d
        node_region[n] = best
    return HexGrid(axial, node_region, diameter_km)


def load_grid(path: str, net: StreetNetwork) -> HexGrid:
    """Parse ``R <region-id> <q> <r>`` and ``M <node-id> <region-id>`` lines.

    Every network node must be mapped exactly once; violations raise GridError
    naming the offending nodes.
    """
    axial: dict[int, tuple[int, int]] = {}
    node_region: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "R":
                    if len(parts) != 4:
                        raise ValueError("expected: R <region-id> <q> <r>")
                    rid = int(parts[1])
                    if rid in axial:
                        raise ValueError(f"duplicate region id {rid}")
                    axial[rid] = (int(parts[2]), int(parts[3]))
                elif parts[0] == "M":
                    if len(parts) != 3:
                        raise ValueError("expected: M <node-id> <region-id>")
                    nid = int(parts[1])
                    if nid in node_region:
                        raise ValueError(f"node {nid} mapped twice")
                    node_region[nid] = int(parts[2])
                else:
                    raise ValueError(f"unknown record type {parts[0]!r}")
            except ValueError as exc:
                raise GridParseError(path, line_no, str(exc)) from None
    missing = [n for n in net.nodes if n not in node_region]
    if missing:
        raise GridError(f"unmapped network nodes: {missing}")
    extra = [n for n in node_region if n not in set(net.nodes)]
    if extra:
        raise GridError(f"mapping references unknown nodes: {sorted(extra)}")
    return HexGrid(axial, node_region)


def save_grid(grid: HexGrid, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        for r in grid.regions:
            q, s = grid.axial(r)
            fh.write(f"R {r} {q} {s}\n")
        for r in grid.regions:
            for n in grid.nodes_of(r):
                fh.write(f"M {n} {r}\n")
