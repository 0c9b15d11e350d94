"""Fleet state and epoch-driven motion.

Vehicles follow stop plans built from matched trips.  Between decision points
they advance deterministically along precomputed shortest routes; pickups and
drop-offs fire as their stops are reached, emitting replayable events.  All
vehicle iteration is in ascending id order so runs are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .demand import Batch, Request
from .hexgrid import HexGrid, MAX_ACTIONS
from .network import Route, StreetNetwork
from .trips import DROPOFF, PICKUP, DelayParams, Onboard, Stop, Trip

# Pseudo-stop kind for repositioning legs; carries no passenger action.
MOVE = "move"

EV_MATCH = "match"
EV_PICKUP = "pickup"
EV_DROPOFF = "dropoff"
EV_DROP_REQUEST = "drop_request"
EV_REPOSITION = "reposition"

_EPS = 1e-9


class FleetError(ValueError):
    """Inconsistent fleet operation (capacity, duplicate assignment, ...)."""


@dataclass
class Vehicle:
    id: int
    capacity: int
    node: int                 # anchor: current node, or the node being approached
    offset_s: float = 0.0     # seconds left to reach the anchor (0 = at node)
    plan_stops: list[Stop] = field(default_factory=list)
    plan_routes: list[Route] = field(default_factory=list)
    leg_elapsed_s: float = 0.0
    onboard: list[Onboard] = field(default_factory=list)
    pending: list[Request] = field(default_factory=list)
    dispatched_region: int | None = None

    @property
    def load(self) -> int:
        """Seats promised: riders aboard plus accepted pickups."""
        return len(self.onboard) + len(self.pending)

    def is_idle(self) -> bool:
        return not self.onboard and not self.pending

    def plan_origin(self) -> tuple[int, float]:
        """Node the next plan would start from, plus seconds to reach it.

        Mid-leg positions anchor at the next node of the current route; any
        remaining sub-route of a shortest route is itself shortest, so travel
        times measured from the anchor stay exact.
        """
        if self.offset_s > _EPS:
            return self.node, self.offset_s
        if self.plan_routes and self.leg_elapsed_s > _EPS:
            route = self.plan_routes[0]
            for j in range(len(route.offsets_s) - 1, -1, -1):
                if route.offsets_s[j] <= self.leg_elapsed_s + _EPS:
                    if abs(route.offsets_s[j] - self.leg_elapsed_s) <= _EPS:
                        return route.nodes[j], 0.0
                    return route.nodes[j + 1], route.offsets_s[j + 1] - self.leg_elapsed_s
        return self.node, 0.0

    def position_node(self) -> int:
        return self.plan_origin()[0]

    def plan_stop_sequence(self) -> tuple[Stop, ...]:
        """Committed passenger stops in plan order (repositioning excluded)."""
        return tuple(s for s in self.plan_stops if s.kind != MOVE)

    def repo_target(self) -> int | None:
        if self.plan_stops and self.plan_stops[-1].kind == MOVE:
            return self.plan_stops[-1].node
        return None

    def _rebase(self):
        """Collapse current motion into (node, offset) and clear the plan."""
        self.node, self.offset_s = self.plan_origin()
        self.plan_stops = []
        self.plan_routes = []
        self.leg_elapsed_s = 0.0


@dataclass
class Observation:
    """Per-vehicle dispatch input aligned to the region's ordered action set.

    Vectors are padded with zeros past the action set's true length; the mask
    marks which of the MAX_ACTIONS slots are real regions.
    """

    vehicle_id: int
    own_region: int
    action_regions: tuple[int, ...]
    action_mask: np.ndarray      # bool (MAX_ACTIONS,)
    avail_counts: np.ndarray     # vehicles with spare seats, float (MAX_ACTIONS,)
    request_counts: np.ndarray   # active batch origins, float (MAX_ACTIONS,)
    vehicle_counts: np.ndarray   # all vehicles, float (MAX_ACTIONS,)
    load: int
    tod_frac: float


class SimState:
    """World state plus cumulative metrics and the event log."""

    def __init__(
        self,
        net: StreetNetwork,
        grid: HexGrid,
        params: DelayParams,
        vehicles: list[Vehicle],
        credit_at_match: bool = False,
    ):
        self.net = net
        self.grid = grid
        self.params = params
        self.vehicles = sorted(vehicles, key=lambda v: v.id)
        ids = [v.id for v in self.vehicles]
        if len(set(ids)) != len(ids):
            raise FleetError("duplicate vehicle ids")
        self._by_id = {v.id: v for v in self.vehicles}
        self.credit_at_match = credit_at_match
        self.clock_s = 0.0
        self.epoch = 0
        self.active_batch: Batch | None = None
        self.requests: dict[int, Request] = {}
        self.revenue = 0.0
        self.served = 0
        self.dropped = 0
        self.matched = 0
        self.seen = 0
        self.assignments = 0
        self.events: list[dict] = []
        self.violations: list[str] = []

    def vehicle(self, vid: int) -> Vehicle:
        try:
            return self._by_id[vid]
        except KeyError:
            raise FleetError(f"unknown vehicle {vid}") from None

    @property
    def active_riders(self) -> int:
        return sum(v.load for v in self.vehicles)

    def metrics_row(self) -> dict:
        return {
            "epoch": self.epoch,
            "revenue": self.revenue,
            "served": self.served,
            "active": self.active_riders,
            "dropped": self.dropped,
        }

    def all_idle(self) -> bool:
        return all(
            v.is_idle() and not v.plan_routes and v.offset_s <= _EPS
            for v in self.vehicles
        )


def init_fleet(
    net: StreetNetwork, n_vehicles: int, capacity: int, seed: int
) -> list[Vehicle]:
    """Place vehicles uniformly at random over network nodes."""
    if n_vehicles < 1 or capacity < 1:
        raise FleetError("need at least one vehicle and one seat")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(net.nodes), size=n_vehicles)
    return [
        Vehicle(id=i, capacity=capacity, node=net.nodes[int(picks[i])])
        for i in range(n_vehicles)
    ]


def set_active_batch(state: SimState, batch: Batch):
    state.active_batch = batch
    state.seen += len(batch)


def observe(state: SimState, vid: int) -> Observation:
    """Build the dispatch observation for one vehicle."""
    vehicle = state.vehicle(vid)
    own = state.grid.region_of(vehicle.position_node())
    action_set = state.grid.action_set(own)
    regions = action_set.regions
    slot = {r: i for i, r in enumerate(regions)}

    mask = np.zeros(MAX_ACTIONS, dtype=bool)
    mask[: len(regions)] = True
    avail = np.zeros(MAX_ACTIONS)
    vcount = np.zeros(MAX_ACTIONS)
    for other in state.vehicles:
        r = state.grid.region_of(other.position_node())
        i = slot.get(r)
        if i is None:
            continue
        vcount[i] += 1.0
        if other.load < other.capacity:
            avail[i] += 1.0
    rcount = np.zeros(MAX_ACTIONS)
    if state.active_batch is not None:
        for req in state.active_batch.requests:
            i = slot.get(state.grid.region_of(req.origin))
            if i is not None:
                rcount[i] += 1.0
    return Observation(
        vehicle_id=vid,
        own_region=own,
        action_regions=regions,
        action_mask=mask,
        avail_counts=avail,
        request_counts=rcount,
        vehicle_counts=vcount,
        load=vehicle.load,
        tod_frac=(state.clock_s % 86400.0) / 86400.0,
    )


def _install_plan(state: SimState, vehicle: Vehicle, stops: list[Stop]):
    vehicle._rebase()
    here = vehicle.node
    routes = []
    for stop in stops:
        routes.append(state.net.shortest_route(here, stop.node))
        here = stop.node
    vehicle.plan_stops = list(stops)
    vehicle.plan_routes = routes
    vehicle.leg_elapsed_s = 0.0


def apply_assignment(state: SimState, trip: Trip):
    """Commit one matched trip (possibly empty) to its vehicle."""
    vehicle = state.vehicle(trip.vehicle)
    vehicle.dispatched_region = trip.region
    if trip.requests:
        if vehicle.load + len(trip.requests) > vehicle.capacity:
            raise FleetError(
                f"vehicle {vehicle.id} over capacity: load {vehicle.load} "
                f"+ {len(trip.requests)} > {vehicle.capacity}"
            )
        known = {r.request_id for r in vehicle.onboard}
        known.update(r.id for r in vehicle.pending)
        for req in trip.requests:
            if req.id in known or req.id in state.requests:
                raise FleetError(f"request {req.id} assigned twice")
        _install_plan(state, vehicle, list(trip.stops))
        for req in sorted(trip.requests, key=lambda r: r.id):
            vehicle.pending.append(req)
            state.requests[req.id] = req
        state.matched += len(trip.requests)
        state.assignments += 1
        if state.credit_at_match:
            state.revenue += sum(r.price for r in trip.requests)
        state.events.append(
            {
                "ev": EV_MATCH,
                "t": state.clock_s,
                "epoch": state.epoch,
                "vehicle": vehicle.id,
                "requests": [r.id for r in sorted(trip.requests, key=lambda r: r.id)],
                "value": trip.revenue,
            }
        )
        return

    # Empty trip: busy vehicles keep their plan; idle ones head for the
    # dispatched region's anchor node.
    if not vehicle.is_idle():
        return
    target = state.grid.anchor_node(trip.region)
    if target is None:
        return
    anchor, offset = vehicle.plan_origin()
    if target == anchor and offset <= _EPS:
        vehicle._rebase()
        return
    if vehicle.repo_target() == target:
        return
    _install_plan(state, vehicle, [Stop(target, -1, MOVE)])
    state.events.append(
        {
            "ev": EV_REPOSITION,
            "t": state.clock_s,
            "epoch": state.epoch,
            "vehicle": vehicle.id,
            "region": trip.region,
            "node": target,
        }
    )


def drop_unmatched(state: SimState, requests: list[Request]):
    """Expire this epoch's unserved requests."""
    for req in sorted(requests, key=lambda r: r.id):
        state.dropped += 1
        state.events.append(
            {
                "ev": EV_DROP_REQUEST,
                "t": state.clock_s,
                "epoch": state.epoch,
                "request": req.id,
            }
        )


def _fire_stop(state: SimState, vehicle: Vehicle, stop: Stop, t: float):
    if stop.kind == MOVE:
        return
    if stop.kind == PICKUP:
        req = next((r for r in vehicle.pending if r.id == stop.request_id), None)
        if req is None:
            raise FleetError(
                f"vehicle {vehicle.id} reached pickup for unknown request {stop.request_id}"
            )
        vehicle.pending.remove(req)
        direct = state.net.shortest_travel_time(req.origin, req.dest)
        vehicle.onboard.append(
            Onboard(
                request_id=req.id,
                dest=req.dest,
                boarded_s=t,
                direct_s=direct,
                latest_dropoff_s=t + direct + state.params.max_detour_s,
            )
        )
        deadline = req.arrival_s + state.params.max_pickup_s
        if t > deadline + 1.0:
            state.violations.append(
                f"pickup of request {req.id} at {t:.3f}s missed deadline {deadline:.3f}s"
            )
        state.events.append(
            {
                "ev": EV_PICKUP,
                "t": t,
                "epoch": state.epoch,
                "vehicle": vehicle.id,
                "request": req.id,
                "node": stop.node,
            }
        )
        return
    if stop.kind == DROPOFF:
        ob = next((o for o in vehicle.onboard if o.request_id == stop.request_id), None)
        if ob is None:
            raise FleetError(
                f"vehicle {vehicle.id} reached dropoff for absent rider {stop.request_id}"
            )
        vehicle.onboard.remove(ob)
        if t > ob.latest_dropoff_s + 1.0:
            state.violations.append(
                f"dropoff of request {ob.request_id} at {t:.3f}s missed "
                f"deadline {ob.latest_dropoff_s:.3f}s"
            )
        price = state.requests[ob.request_id].price
        if not state.credit_at_match:
            state.revenue += price
        state.served += 1
        state.events.append(
            {
                "ev": EV_DROPOFF,
                "t": t,
                "epoch": state.epoch,
                "vehicle": vehicle.id,
                "request": ob.request_id,
                "node": stop.node,
                "value": price,
            }
        )
        return
    raise FleetError(f"unknown stop kind {stop.kind!r}")


def _advance_vehicle(state: SimState, vehicle: Vehicle, dt: float):
    remaining = dt
    t = state.clock_s
    while True:
        if vehicle.offset_s > _EPS:
            if remaining <= _EPS:
                break
            step = min(vehicle.offset_s, remaining)
            vehicle.offset_s -= step
            remaining -= step
            t += step
            if vehicle.offset_s <= _EPS:
                vehicle.offset_s = 0.0
            continue
        vehicle.offset_s = 0.0
        if not vehicle.plan_routes:
            break
        total = vehicle.plan_routes[0].travel_time_s
        if total - vehicle.leg_elapsed_s <= _EPS:
            # Already at the stop (zero-length leg or exact boundary): fire
            # now so same-instant stop chains never leak into the next epoch.
            stop = vehicle.plan_stops.pop(0)
            vehicle.plan_routes.pop(0)
            vehicle.leg_elapsed_s = 0.0
            vehicle.node = stop.node
            _fire_stop(state, vehicle, stop, t)
            continue
        if remaining <= _EPS:
            break
        step = min(total - vehicle.leg_elapsed_s, remaining)
        remaining -= step
        t += step
        vehicle.leg_elapsed_s += step


def advance_epoch(state: SimState, epoch_s: float):
    """Move every vehicle forward one epoch; clock and epoch tick at the end."""
    if epoch_s <= 0:
        raise FleetError("epoch length must be positive")
    mark = len(state.events)
    for vehicle in state.vehicles:
        _advance_vehicle(state, vehicle, epoch_s)
    state.events[mark:] = sorted(
        state.events[mark:], key=lambda e: (e["t"], e["vehicle"])
    )
    state.clock_s += epoch_s
    state.epoch += 1
