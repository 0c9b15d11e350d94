"""Shared-ride trip feasibility and candidate-trip generation.

A trip is a set of requests a vehicle could serve together with its existing
passengers without breaking anyone's pickup or detour promise.  Candidate
trips grow incrementally by size: a set of k requests is tested only when all
its (k-1)-subsets proved feasible, which is safe because removing a request
from a feasible stop sequence never increases any remaining passenger's delay
(travel times obey the triangle inequality of a shortest-time metric).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

from .demand import Request
from .hexgrid import HexGrid
from .network import StreetNetwork

PICKUP = "pickup"
DROPOFF = "dropoff"

# Plans with at most this many stops are ordered by exhaustive permutation
# search; larger plans fall back to best-insertion per added request.
MAX_EXHAUSTIVE_STOPS = 6


class TripError(ValueError):
    """Invalid arguments to trip construction."""


@dataclass(frozen=True)
class DelayParams:
    """Service-quality promises: max wait before pickup, max ride stretch."""

    max_pickup_s: float = 300.0
    max_detour_s: float = 600.0

    def __post_init__(self):
        if self.max_pickup_s <= 0 or self.max_detour_s <= 0:
            raise TripError("delay bounds must be positive")


@dataclass(frozen=True)
class Stop:
    node: int
    request_id: int
    kind: str  # PICKUP or DROPOFF


@dataclass(frozen=True)
class Onboard:
    """A passenger already in the vehicle and the promise made at boarding."""

    request_id: int
    dest: int
    boarded_s: float
    direct_s: float
    latest_dropoff_s: float


@dataclass(frozen=True)
class InsertionPlan:
    """Outcome of scheduling a stop set; delays cover every constrained rider."""

    feasible: bool
    stops: tuple[Stop, ...] = ()
    worst_pickup_delay_s: float = 0.0
    worst_detour_delay_s: float = 0.0
    total_delay_s: float = 0.0
    completion_s: float = 0.0


@dataclass(frozen=True)
class Trip:
    """A feasible assignment option for one vehicle.

    ``stops`` is the full replacement plan, existing commitments included.
    The empty trip (no new requests) is always present and carries the
    dispatched region so an idle vehicle can reposition toward it.
    """

    vehicle: int
    region: int
    requests: tuple[Request, ...]
    stops: tuple[Stop, ...]
    revenue: float
    worst_pickup_delay_s: float
    worst_detour_delay_s: float

    @property
    def request_ids(self) -> tuple[int, ...]:
        return tuple(r.id for r in self.requests)


def trip_value(requests: Iterable[Request], alpha: float = 1.0, beta: float = 0.0) -> float:
    """Linear trip objective: alpha * total fare + beta."""
    return alpha * sum(r.price for r in requests) + beta


def _evaluate_sequence(
    net: StreetNetwork,
    params: DelayParams,
    now_s: float,
    start_node: int,
    start_offset_s: float,
    onboard: dict[int, Onboard],
    riders: dict[int, Request],
    seq: Sequence[Stop],
) -> InsertionPlan:
    """Simulate one stop ordering and check every promise along it.

    ``riders`` holds requests not yet picked up (pending plus new); their
    pickup deadline is arrival + max_pickup and their detour clock starts at
    the simulated pickup.  Onboard passengers only have their fixed drop-off
    deadline left to honor.
    """
    t = now_s + start_offset_s
    here = start_node
    pickup_at: dict[int, float] = {}
    worst_pick = 0.0
    worst_det = 0.0
    total = 0.0
    for stop in seq:
        t += net.shortest_travel_time(here, stop.node)
        here = stop.node
        if stop.kind == PICKUP:
            req = riders[stop.request_id]
            delay = max(0.0, t - req.arrival_s)
            if delay > params.max_pickup_s:
                return InsertionPlan(False)
            pickup_at[req.id] = t
            worst_pick = max(worst_pick, delay)
            total += delay
        else:
            if stop.request_id in onboard:
                ob = onboard[stop.request_id]
                detour = max(0.0, t - ob.boarded_s - ob.direct_s)
                if t > ob.latest_dropoff_s:
                    return InsertionPlan(False)
            else:
                req = riders[stop.request_id]
                direct = net.shortest_travel_time(req.origin, req.dest)
                detour = max(0.0, t - pickup_at[req.id] - direct)
                if detour > params.max_detour_s:
                    return InsertionPlan(False)
            worst_det = max(worst_det, detour)
            total += detour
    return InsertionPlan(True, tuple(seq), worst_pick, worst_det, total, t)


def _precedence_ok(seq: Sequence[Stop], rider_ids: set[int]) -> bool:
    """Each rider's pickup precedes its dropoff; onboard dropoffs are free."""
    seen_pickup = set()
    for stop in seq:
        if stop.kind == PICKUP:
            seen_pickup.add(stop.request_id)
        elif stop.request_id in rider_ids and stop.request_id not in seen_pickup:
            return False
    return True


def _plan_key(plan: InsertionPlan) -> tuple:
    seq = tuple((s.node, s.request_id, s.kind) for s in plan.stops)
    return (plan.total_delay_s, plan.completion_s, seq)


def evaluate_insertion(
    net: StreetNetwork,
    params: DelayParams,
    now_s: float,
    start_node: int,
    start_offset_s: float,
    capacity: int,
    onboard: Sequence[Onboard],
    pending: Sequence[Request],
    current_stops: Sequence[Stop],
    new_requests: Sequence[Request],
) -> InsertionPlan:
    """Best feasible stop ordering after adding ``new_requests``, or infeasible.

    ``current_stops`` is the vehicle's committed remaining plan; it seeds the
    best-insertion path and is re-evaluated together with the additions.  The
    best ordering minimizes total delay, then completion time, then the
    lexicographic stop sequence, so results are deterministic.
    """
    if len(onboard) + len(pending) + len(new_requests) > capacity:
        return InsertionPlan(False)
    riders = {r.id: r for r in pending}
    for r in new_requests:
        if r.id in riders:
            raise TripError(f"request {r.id} added twice")
        riders[r.id] = r
    onboard_map = {ob.request_id: ob for ob in onboard}

    def evaluate(seq: Sequence[Stop]) -> InsertionPlan:
        return _evaluate_sequence(
            net, params, now_s, start_node, start_offset_s, onboard_map, riders, seq
        )

    n_stops = len(onboard) + 2 * len(riders)
    if n_stops == 0:
        return InsertionPlan(True, (), 0.0, 0.0, 0.0, now_s + start_offset_s)

    if n_stops <= MAX_EXHAUSTIVE_STOPS:
        stops = [Stop(ob.dest, ob.request_id, DROPOFF) for ob in onboard]
        for rid in sorted(riders):
            req = riders[rid]
            stops.append(Stop(req.origin, rid, PICKUP))
            stops.append(Stop(req.dest, rid, DROPOFF))
        rider_ids = set(riders)
        best: InsertionPlan | None = None
        for perm in itertools.permutations(stops):
            if not _precedence_ok(perm, rider_ids):
                continue
            plan = evaluate(perm)
            if plan.feasible and (best is None or _plan_key(plan) < _plan_key(best)):
                best = plan
        return best if best is not None else InsertionPlan(False)

    # Large plans: keep the committed ordering and insert each new request's
    # pickup/dropoff pair at its best feasible positions, one request at a time.
    seq = list(current_stops)
    for req in sorted(new_requests, key=lambda r: r.id):
        best = None
        for i in range(len(seq) + 1):
            for j in range(i, len(seq) + 1):
                cand = list(seq)
                cand.insert(i, Stop(req.origin, req.id, PICKUP))
                cand.insert(j + 1, Stop(req.dest, req.id, DROPOFF))
                plan = evaluate(cand)
                if plan.feasible and (best is None or _plan_key(plan) < _plan_key(best)):
                    best = plan
        if best is None:
            return InsertionPlan(False)
        seq = list(best.stops)
    return evaluate(seq)


def feasible_trips(
    net: StreetNetwork,
    grid: HexGrid,
    vehicle,
    region: int,
    requests: Sequence[Request],
    params: DelayParams,
    now_s: float,
    alpha: float = 1.0,
    beta: float = 0.0,
) -> list[Trip]:
    """All feasible trips for one vehicle restricted to its dispatched region.

    ``vehicle`` needs: id, capacity, plan_origin() -> (node, offset seconds),
    onboard list, pending list, plan stop sequence.  Candidate requests are
    those whose origin lies in ``region``.  The empty trip always leads the
    returned list; non-empty trips follow ordered by (size, request ids).
    """
    start_node, start_offset = vehicle.plan_origin()
    onboard = tuple(vehicle.onboard)
    pending = tuple(vehicle.pending)
    current = tuple(vehicle.plan_stop_sequence())
    trips = [
        Trip(
            vehicle=vehicle.id,
            region=region,
            requests=(),
            stops=current,
            revenue=trip_value((), alpha, beta),
            worst_pickup_delay_s=0.0,
            worst_detour_delay_s=0.0,
        )
    ]
    spare = vehicle.capacity - len(onboard) - len(pending)
    if spare <= 0:
        return trips

    candidates = sorted(
        (r for r in requests if grid.region_of(r.origin) == region),
        key=lambda r: r.id,
    )
    if not candidates:
        return trips

    def attempt(reqs: tuple[Request, ...]) -> InsertionPlan:
        return evaluate_insertion(
            net, params, now_s, start_node, start_offset,
            vehicle.capacity, onboard, pending, current, reqs,
        )

    by_id = {r.id: r for r in candidates}
    feasible: dict[frozenset[int], InsertionPlan] = {}
    level: list[frozenset[int]] = []
    for r in candidates:
        key = frozenset((r.id,))
        plan = attempt((r,))
        if plan.feasible:
            feasible[key] = plan
            level.append(key)

    size = 1
    while level and size < spare:
        next_level: list[frozenset[int]] = []
        seen: set[frozenset[int]] = set()
        for key in level:
            for r in candidates:
                if r.id in key:
                    continue
                grown = key | {r.id}
                if grown in seen:
                    continue
                seen.add(grown)
                if any(grown - {x} not in feasible for x in grown):
                    continue
                reqs = tuple(by_id[i] for i in sorted(grown))
                plan = attempt(reqs)
                if plan.feasible:
                    feasible[grown] = plan
                    next_level.append(grown)
        level = next_level
        size += 1

    for key in sorted(feasible, key=lambda k: (len(k), tuple(sorted(k)))):
        plan = feasible[key]
        reqs = tuple(by_id[i] for i in sorted(key))
        trips.append(
            Trip(
                vehicle=vehicle.id,
                region=region,
                requests=reqs,
                stops=plan.stops,
                revenue=trip_value(reqs, alpha, beta),
                worst_pickup_delay_s=plan.worst_pickup_delay_s,
                worst_detour_delay_s=plan.worst_detour_delay_s,
            )
        )
    return trips
