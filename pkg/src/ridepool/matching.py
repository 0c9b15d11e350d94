"""Exact vehicle-trip assignment.

Maximizes total trip value subject to: every vehicle takes exactly one of its
candidate trips (an empty trip is always available), and every request is
served by at most one vehicle.  The solver decomposes the instance into
connected components over shared requests and runs depth-first branch and
bound inside each; with the search exploring vehicles in id order and trips in
candidate-list order, the first optimum found is the lexicographically
smallest one, and only strict improvements replace the incumbent, so the
returned assignment is deterministic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

DEFAULT_NODE_BUDGET = 500_000

# Violation kinds reported by verify().
VEHICLE_MULTIPLICITY = "vehicle-multiplicity"
REQUEST_MULTIPLICITY = "request-multiplicity"
UNKNOWN_CHOICE = "unknown-choice"


class MatchingError(ValueError):
    """Malformed instance or assignment."""


@dataclass(frozen=True)
class TripChoice:
    """One candidate trip: the request ids it serves and its value."""

    requests: tuple[int, ...]
    value: float

    def __post_init__(self):
        if tuple(sorted(set(self.requests))) != self.requests:
            raise MatchingError(f"trip requests must be sorted and unique: {self.requests}")


@dataclass(frozen=True)
class MatchingInstance:
    """Candidate trips per vehicle, vehicles in ascending id order."""

    trips: tuple[tuple[int, tuple[TripChoice, ...]], ...]

    @classmethod
    def from_dict(cls, trips: Mapping[int, Sequence[TripChoice]]) -> "MatchingInstance":
        return cls(tuple((int(v), tuple(ts)) for v, ts in sorted(trips.items())))

    def __post_init__(self):
        seen = set()
        for vid, choices in self.trips:
            if vid in seen:
                raise MatchingError(f"vehicle {vid} listed twice")
            seen.add(vid)
            if not any(len(t.requests) == 0 for t in choices):
                raise MatchingError(f"vehicle {vid} lacks an empty trip")

    @property
    def vehicles(self) -> tuple[int, ...]:
        return tuple(v for v, _ in self.trips)

    def choices(self, vehicle: int) -> tuple[TripChoice, ...]:
        for v, ts in self.trips:
            if v == vehicle:
                return ts
        raise MatchingError(f"unknown vehicle {vehicle}")

    def request_ids(self) -> tuple[int, ...]:
        out = set()
        for _, choices in self.trips:
            for t in choices:
                out.update(t.requests)
        return tuple(sorted(out))


@dataclass(frozen=True)
class Assignment:
    """Chosen trip index per vehicle plus the achieved objective."""

    chosen: tuple[tuple[int, int], ...]  # (vehicle id, trip index)
    objective: float
    optimal: bool

    def trip_index(self, vehicle: int) -> int:
        for v, t in self.chosen:
            if v == vehicle:
                return t
        raise MatchingError(f"vehicle {vehicle} not in assignment")

    def as_dict(self) -> dict[int, int]:
        return dict(self.chosen)


def _components(instance: MatchingInstance) -> list[list[int]]:
    """Group vehicles connected through shared candidate requests."""
    by_request: dict[int, list[int]] = {}
    for vid, choices in instance.trips:
        for t in choices:
            for r in t.requests:
                by_request.setdefault(r, []).append(vid)
    adj: dict[int, set[int]] = {v: set() for v in instance.vehicles}
    for vids in by_request.values():
        for v in vids[1:]:
            adj[vids[0]].add(v)
            adj[v].add(vids[0])
    comps: list[list[int]] = []
    unseen = set(instance.vehicles)
    for v in instance.vehicles:
        if v not in unseen:
            continue
        stack, comp = [v], []
        unseen.discard(v)
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in adj[u]:
                if w in unseen:
                    unseen.discard(w)
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


def _greedy(vehicles: list[int], choice_map: dict[int, tuple[TripChoice, ...]]):
    """Deterministic fallback: take the most valuable non-conflicting trips."""
    ranked = []
    for vid in vehicles:
        for idx, t in enumerate(choice_map[vid]):
            ranked.append((-t.value, vid, idx))
    ranked.sort()
    used: set[int] = set()
    chosen: dict[int, int] = {}
    for neg, vid, idx in ranked:
        if vid in chosen:
            continue
        reqs = choice_map[vid][idx].requests
        if any(r in used for r in reqs):
            continue
        chosen[vid] = idx
        used.update(reqs)
    for vid in vehicles:
        if vid not in chosen:
            chosen[vid] = next(
                i for i, t in enumerate(choice_map[vid]) if not t.requests
            )
    value = sum(choice_map[v][chosen[v]].value for v in vehicles)
    return chosen, value


def _solve_component(
    vehicles: list[int],
    choice_map: dict[int, tuple[TripChoice, ...]],
    budget: int,
) -> tuple[dict[int, int], float, bool]:
    # Upper bound for vehicles i.. ignoring conflicts: each takes its best trip.
    best_per_vehicle = [max(t.value for t in choice_map[v]) for v in vehicles]
    suffix = [0.0] * (len(vehicles) + 1)
    for i in range(len(vehicles) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + best_per_vehicle[i]

    best_value = -float("inf")
    best_chosen: dict[int, int] | None = None
    used: set[int] = set()
    chosen: dict[int, int] = {}
    nodes = 0
    exhausted = False

    def dfs(i: int, value: float):
        nonlocal best_value, best_chosen, nodes, exhausted
        if exhausted:
            return
        nodes += 1
        if nodes > budget:
            exhausted = True
            return
        if best_chosen is not None and value + suffix[i] <= best_value:
            return
        if i == len(vehicles):
            if value > best_value:
                best_value = value
                best_chosen = dict(chosen)
            return
        vid = vehicles[i]
        for idx, t in enumerate(choice_map[vid]):
            if any(r in used for r in t.requests):
                continue
            chosen[vid] = idx
            used.update(t.requests)
            dfs(i + 1, value + t.value)
            used.difference_update(t.requests)
            del chosen[vid]
            if exhausted:
                return

    dfs(0, 0.0)
    if exhausted or best_chosen is None:
        g_chosen, g_value = _greedy(vehicles, choice_map)
        if best_chosen is None or g_value > best_value:
            return g_chosen, g_value, False
        return best_chosen, best_value, False
    return best_chosen, best_value, True


def solve(instance: MatchingInstance, node_budget: int = DEFAULT_NODE_BUDGET) -> Assignment:
    """Optimal assignment, or the best found plus greedy completion when the
    node budget runs out (then .optimal is False)."""
    choice_map = dict(instance.trips)
    chosen: dict[int, int] = {}
    objective = 0.0
    optimal = True
    for comp in _components(instance):
        c_chosen, c_value, c_opt = _solve_component(comp, choice_map, node_budget)
        chosen.update(c_chosen)
        objective += c_value
        optimal = optimal and c_opt
    pairs = tuple(sorted(chosen.items()))
    return Assignment(pairs, objective, optimal)


def verify(instance: MatchingInstance, assignment: Assignment) -> list[str]:
    """Constraint audit independent of the solver; empty list means clean.

    Checks the two constraint families directly: exactly one (valid) trip per
    vehicle, and no request served by more than one vehicle.
    """
    problems: list[str] = []
    choice_map = dict(instance.trips)
    seen_vehicles: dict[int, int] = {}
    for vid, idx in assignment.chosen:
        if vid not in choice_map:
            problems.append(f"{UNKNOWN_CHOICE}: vehicle {vid} not in instance")
            continue
        if vid in seen_vehicles:
            problems.append(f"{VEHICLE_MULTIPLICITY}: vehicle {vid} assigned twice")
            continue
        seen_vehicles[vid] = idx
        if not 0 <= idx < len(choice_map[vid]):
            problems.append(f"{UNKNOWN_CHOICE}: vehicle {vid} trip index {idx} out of range")
    for vid in choice_map:
        if vid not in seen_vehicles:
            problems.append(f"{VEHICLE_MULTIPLICITY}: vehicle {vid} has no trip")
    owners: dict[int, int] = {}
    for vid, idx in seen_vehicles.items():
        if not 0 <= idx < len(choice_map[vid]):
            continue
        for r in choice_map[vid][idx].requests:
            if r in owners:
                problems.append(
                    f"{REQUEST_MULTIPLICITY}: request {r} served by vehicles "
                    f"{owners[r]} and {vid}"
                )
            else:
                owners[r] = vid
    return problems


def objective_of(instance: MatchingInstance, assignment: Assignment) -> float:
    choice_map = dict(instance.trips)
    return sum(choice_map[v][i].value for v, i in assignment.chosen)


# -- serialization ---------------------------------------------------------


def instance_to_json(instance: MatchingInstance) -> str:
    payload = {
        "vehicles": [
            {
                "id": vid,
                "trips": [
                    {"requests": list(t.requests), "value": t.value} for t in choices
                ],
            }
            for vid, choices in instance.trips
        ]
    }
    return json.dumps(payload, sort_keys=True)


def instance_from_json(text: str) -> MatchingInstance:
    try:
        payload = json.loads(text)
        trips = {
            int(entry["id"]): [
                TripChoice(tuple(int(r) for r in t["requests"]), float(t["value"]))
                for t in entry["trips"]
            ]
            for entry in payload["vehicles"]
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise MatchingError(f"bad instance payload: {exc}") from None
    return MatchingInstance.from_dict(trips)
