"""Ride requests: pricing, CSV loading, synthetic generation, batching."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .hexgrid import HexGrid
from .network import StreetNetwork, UnknownNodeError


class DemandError(ValueError):
    """Invalid request data."""


@dataclass(frozen=True)
class PricingParams:
    base: float = 2.0
    per_km: float = 1.5
    per_min: float = 0.3

    def __post_init__(self):
        if self.base < 0 or self.per_km < 0 or self.per_min < 0:
            raise DemandError("pricing components must be non-negative")


@dataclass(frozen=True)
class Request:
    """One ride request; the fare is fixed at creation time."""

    id: int
    origin: int
    dest: int
    arrival_s: float
    price: float

    def __post_init__(self):
        if self.origin == self.dest:
            raise DemandError(f"request {self.id}: origin equals destination")
        if self.arrival_s < 0:
            raise DemandError(f"request {self.id}: negative arrival time")
        if self.price <= 0 or not math.isfinite(self.price):
            raise DemandError(f"request {self.id}: price must be positive and finite")


@dataclass(frozen=True)
class Batch:
    """Requests arriving in epoch window [epoch*delta, (epoch+1)*delta)."""

    epoch: int
    requests: tuple[Request, ...]

    def __len__(self) -> int:
        return len(self.requests)


def price_request(
    net: StreetNetwork, origin: int, dest: int, pricing: PricingParams
) -> float:
    """base + per_km * direct km + per_min * direct minutes along the fastest route."""
    route = net.shortest_route(origin, dest)
    return (
        pricing.base
        + pricing.per_km * route.length_m / 1000.0
        + pricing.per_min * route.travel_time_s / 60.0
    )


def load_requests(
    path: str, net: StreetNetwork, pricing: PricingParams | None = None
) -> list[Request]:
    """Read a request CSV in either node-id or coordinate form.

    Headers: ``id,origin,dest,arrival_s,price`` (explicit price) or
    ``id,olat,olon,dlat,dlon,arrival_s`` (coordinates snapped to nearest nodes,
    price derived from the pricing parameters).
    """
    pricing = pricing or PricingParams()
    out: list[Request] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        node_form = {"id", "origin", "dest", "arrival_s", "price"}
        coord_form = {"id", "olat", "olon", "dlat", "dlon", "arrival_s"}
        names = set(fields)
        if names == node_form:
            coords = False
        elif names == coord_form:
            coords = True
        else:
            raise DemandError(f"{path}: unrecognized request header {fields}")
        for line_no, row in enumerate(reader, start=2):
            try:
                rid = int(row["id"])
                arrival = float(row["arrival_s"])
                if coords:
                    origin = net.nearest_node(float(row["olat"]), float(row["olon"]))
                    dest = net.nearest_node(float(row["dlat"]), float(row["dlon"]))
                    if origin == dest:
                        raise DemandError(
                            f"request {rid}: origin and destination snap to node {origin}"
                        )
                    price = price_request(net, origin, dest, pricing)
                else:
                    origin = int(row["origin"])
                    dest = int(row["dest"])
                    for node in (origin, dest):
                        if node not in set(net.nodes):
                            raise UnknownNodeError(f"unknown node {node}")
                    price = float(row["price"])
                out.append(Request(rid, origin, dest, arrival, price))
            except (DemandError, UnknownNodeError):
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise DemandError(f"{path}:{line_no}: {exc}") from None
    ids = [r.id for r in out]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DemandError(f"{path}: duplicate request ids {dupes}")
    return out


def save_requests(requests: list[Request], path: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "origin", "dest", "arrival_s", "price"])
        for r in requests:
            writer.writerow([r.id, r.origin, r.dest, repr(r.arrival_s), repr(r.price)])


def synth_hotspot_demand(
    net: StreetNetwork,
    grid: HexGrid,
    epochs: int,
    region_rates: dict[int, float],
    seed: int,
    epoch_s: float = 60.0,
    pricing: PricingParams | None = None,
) -> list[Request]:
    """Poisson arrivals per (epoch, region) at the given mean rates.

    Origins are uniform over the region's nodes; destinations uniform over the
    rest of the network.  Arrival instants are uniform inside the epoch window.
    Request ids are sequential in generation order.
    """
    pricing = pricing or PricingParams()
    rng = np.random.default_rng(seed)
    for region, rate in region_rates.items():
        if region not in grid.regions:
            raise DemandError(f"rate given for unknown region {region}")
        if rate < 0:
            raise DemandError(f"negative rate for region {region}")
    out: list[Request] = []
    rid = 0
    all_nodes = net.nodes
    for t in range(epochs):
        for region in sorted(region_rates):
            nodes = grid.nodes_of(region)
            if not nodes:
                continue
            count = int(rng.poisson(region_rates[region]))
            for _ in range(count):
                origin = nodes[int(rng.integers(len(nodes)))]
                dest = origin
                while dest == origin:
                    dest = all_nodes[int(rng.integers(len(all_nodes)))]
                arrival = float(t * epoch_s + rng.uniform(0.0, epoch_s))
                price = price_request(net, origin, dest, pricing)
                out.append(Request(rid, origin, dest, arrival, price))
                rid += 1
    return out


def batch_requests(
    requests: list[Request], epoch_s: float, num_epochs: int | None = None
) -> list[Batch]:
    """Partition requests into per-epoch batches.

    Batch t holds arrivals in [t*epoch_s, (t+1)*epoch_s), ordered by
    (arrival, id).  Every epoch up to num_epochs (or the last arrival) gets a
    batch, empty ones included.
    """
    if epoch_s <= 0:
        raise DemandError("epoch length must be positive")
    buckets: dict[int, list[Request]] = {}
    max_epoch = -1
    for r in requests:
        t = int(r.arrival_s // epoch_s)
        buckets.setdefault(t, []).append(r)
        max_epoch = max(max_epoch, t)
    if num_epochs is None:
        num_epochs = max_epoch + 1
    elif max_epoch >= num_epochs:
        late = [r.id for r in requests if r.arrival_s // epoch_s >= num_epochs]
        raise DemandError(f"requests arrive after the last epoch: {sorted(late)}")
    out = []
    for t in range(num_epochs):
        rs = sorted(buckets.get(t, []), key=lambda r: (r.arrival_s, r.id))
        out.append(Batch(t, tuple(rs)))
    return out
