"""Independent reference implementations used to validate the fast paths.

Everything here favors directness over speed: Bellman-Ford instead of
Dijkstra, bitmask enumeration instead of branch and bound, full permutation
scans instead of incremental growth, and a literal double summation for
mutual information.  Tests and the ``oracle-check`` command compare these
against the production code on seeded random inputs.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .matching import MatchingInstance
from .network import StreetNetwork
from .trips import DROPOFF, PICKUP, DelayParams, Onboard


def bellman_ford_times(net: StreetNetwork, src: int) -> dict[int, float]:
    """Single-source travel times by |V|-1 rounds of edge relaxation."""
    dist = {n: math.inf for n in net.nodes}
    dist[src] = 0.0
    for _ in range(len(net.nodes) - 1):
        changed = False
        for u, v, secs, _ in net.edges:
            if dist[u] + secs < dist[v]:
                dist[v] = dist[u] + secs
                changed = True
        if not changed:
            break
    return dist


def best_assignment_value(instance: MatchingInstance) -> float:
    """Exact optimum by dynamic programming over request subsets.

    Equivalent to enumerating every feasible assignment: state = (next
    vehicle, set of requests already served).
    """
    request_ids = instance.request_ids()
    bit = {r: 1 << i for i, r in enumerate(request_ids)}
    vehicles = instance.vehicles
    memo: dict[tuple[int, int], float] = {}

    def go(i: int, used: int) -> float:
        if i == len(vehicles):
            return 0.0
        key = (i, used)
        if key in memo:
            return memo[key]
        best = -math.inf
        for t in instance.choices(vehicles[i]):
            m = 0
            for r in t.requests:
                m |= bit[r]
            if m & used:
                continue
            best = max(best, t.value + go(i + 1, used | m))
        memo[key] = best
        return best

    return go(0, 0)


def feasible_request_sets(
    net: StreetNetwork,
    params: DelayParams,
    now_s: float,
    start_node: int,
    start_offset_s: float,
    capacity: int,
    onboard: list[Onboard],
    pending: list,
    requests: list,
) -> set[frozenset[int]]:
    """Every request subset servable under the delay promises.

    Checks each subset by trying all stop permutations directly; no growth
    pruning, no insertion heuristics.
    """
    spare = capacity - len(onboard) - len(pending)
    feasible: set[frozenset[int]] = set()

    def sequence_ok(seq) -> bool:
        t = now_s + start_offset_s
        here = start_node
        picked: dict[int, float] = {}
        aboard = {ob.request_id for ob in onboard}
        for stop in seq:
            t += net.shortest_travel_time(here, stop.node)
            here = stop.node
            if stop.kind == PICKUP:
                if t - stop.payload.arrival_s > params.max_pickup_s:
                    return False
                picked[stop.payload.id] = t
            elif stop.payload_is_onboard:
                if t > stop.payload.latest_dropoff_s:
                    return False
            else:
                req = stop.payload
                if req.id not in picked:
                    return False
                direct = net.shortest_travel_time(req.origin, req.dest)
                if t - picked[req.id] - direct > params.max_detour_s:
                    return False
        return True

    class _S:
        __slots__ = ("node", "kind", "payload", "payload_is_onboard")

        def __init__(self, node, kind, payload, is_ob=False):
            self.node = node
            self.kind = kind
            self.payload = payload
            self.payload_is_onboard = is_ob

    for size in range(0, max(spare, 0) + 1):
        for combo in itertools.combinations(sorted(requests, key=lambda r: r.id), size):
            stops = [_S(ob.dest, DROPOFF, ob, True) for ob in onboard]
            for req in list(pending) + list(combo):
                stops.append(_S(req.origin, PICKUP, req))
                stops.append(_S(req.dest, DROPOFF, req))
            ok = False
            for perm in itertools.permutations(stops):
                good_order = True
                seen = set()
                for s in perm:
                    if s.kind == PICKUP:
                        seen.add(s.payload.id)
                    elif not s.payload_is_onboard and s.payload.id not in seen:
                        good_order = False
                        break
                if good_order and sequence_ok(perm):
                    ok = True
                    break
            if ok:
                feasible.add(frozenset(r.id for r in combo))
    return feasible


def cube_ring_members(grid, region: int, k: int) -> set[int]:
    """Regions at hex distance k using cube coordinates and the max norm."""
    q0, r0 = grid.axial(region)
    x0, z0 = q0, r0
    y0 = -x0 - z0
    out = set()
    for other in grid.regions:
        q, r = grid.axial(other)
        x, z = q, r
        y = -x - z
        d = max(abs(x - x0), abs(y - y0), abs(z - z0))
        if d == k:
            out.add(other)
    return out


def exact_mi_double_sum(samples) -> float:
    """I(K; X) by literal double summation over the empirical joint."""
    groups: dict[tuple, np.ndarray] = {}
    counts: dict[tuple, int] = {}
    for pe, pv in samples:
        key = tuple(np.asarray(pe, dtype=np.float64).tolist())
        vec = np.asarray(pv, dtype=np.float64)
        if key in groups:
            groups[key] = groups[key] + vec
            counts[key] += 1
        else:
            groups[key] = vec.copy()
            counts[key] = 1
    n = sum(counts.values())
    keys = list(groups)
    joint = np.stack([groups[k] / n for k in keys])  # P(k, x)
    pk = joint.sum(axis=1)
    px = joint.sum(axis=0)
    mi = 0.0
    for i in range(joint.shape[0]):
        for j in range(joint.shape[1]):
            if joint[i, j] > 0:
                mi += joint[i, j] * math.log(joint[i, j] / (pk[i] * px[j]))
    return mi


def nearest_neighbors_by_scan(
    net: StreetNetwork, positions: dict[int, int], vid: int, k: int
) -> list[int]:
    """k nearest other vehicles by travel time, ties by id, via full scan."""
    rows = []
    for u, node in positions.items():
        if u == vid:
            continue
        rows.append((net.shortest_travel_time(positions[vid], node), u))
    rows.sort()
    return [u for _, u in rows[:k]]


def softmax_by_definition(q, temperature: float) -> np.ndarray:
    """exp(q/T) / sum exp(q/T) computed literally (finite inputs only)."""
    q = np.asarray(q, dtype=np.float64)
    e = np.exp(q / temperature)
    return e / e.sum()


# -- random instance generators (shared by tests and oracle-check) ----------


def random_matching_instance(rng: np.random.Generator, max_vehicles: int = 6,
                             max_requests: int = 8, max_trips: int = 20) -> MatchingInstance:
    from .matching import TripChoice

    n_vehicles = int(rng.integers(1, max_vehicles + 1))
    n_requests = int(rng.integers(1, max_requests + 1))
    pool = list(range(n_requests))
    trips: dict[int, list[TripChoice]] = {}
    for vid in range(n_vehicles):
        choices = [TripChoice((), 0.0)]
        n_trips = int(rng.integers(0, max_trips))
        for _ in range(n_trips):
            size = int(rng.integers(1, min(4, n_requests) + 1))
            reqs = tuple(sorted(rng.choice(pool, size=size, replace=False).tolist()))
            value = float(np.round(rng.uniform(0.1, 60.0), 4))
            choices.append(TripChoice(reqs, value))
        trips[vid] = choices
    return MatchingInstance.from_dict(trips)


def random_trip_scenario(rng: np.random.Generator, net: StreetNetwork,
                         max_requests: int = 5, capacity: int = 3,
                         with_commitments: bool = False):
    """A vehicle situation plus candidate requests for feasibility checks.

    Returns (start_node, start_offset, capacity, onboard, pending, requests,
    params, now).  Commitments, when present, are generated loose enough to be
    satisfiable by direct travel.
    """
    from .demand import Request

    params = DelayParams(
        max_pickup_s=float(rng.integers(200, 500)),
        max_detour_s=float(rng.integers(400, 900)),
    )
    now = float(rng.integers(0, 3600))
    nodes = net.nodes
    start = int(nodes[int(rng.integers(len(nodes)))])
    offset = float(rng.uniform(0, 40)) if rng.random() < 0.3 else 0.0

    onboard: list[Onboard] = []
    pending: list[Request] = []
    next_id = 1000
    if with_commitments:
        for _ in range(int(rng.integers(0, 2))):
            dest = int(nodes[int(rng.integers(len(nodes)))])
            if dest == start:
                continue
            direct = net.shortest_travel_time(start, dest)
            onboard.append(
                Onboard(
                    request_id=next_id,
                    dest=dest,
                    boarded_s=now,
                    direct_s=direct,
                    latest_dropoff_s=now + direct + params.max_detour_s,
                )
            )
            next_id += 1
        if rng.random() < 0.5:
            origin = int(nodes[int(rng.integers(len(nodes)))])
            dest = int(nodes[int(rng.integers(len(nodes)))])
            if origin != dest and net.shortest_travel_time(start, origin) <= params.max_pickup_s * 0.5:
                pending.append(Request(next_id, origin, dest, now, 5.0))
                next_id += 1

    requests = []
    n = int(rng.integers(1, max_requests + 1))
    for i in range(n):
        origin = int(nodes[int(rng.integers(len(nodes)))])
        dest = int(nodes[int(rng.integers(len(nodes)))])
        if origin == dest:
            continue
        arrival = now - float(rng.uniform(0, 60))
        requests.append(Request(i, origin, dest, max(arrival, 0.0), float(rng.uniform(3, 30))))
    return start, offset, capacity, onboard, pending, requests, params, now


def random_joint_samples(rng: np.random.Generator, max_regions: int = 10,
                         max_contexts: int = 6, n_samples: int = 40) -> list[tuple]:
    """Sample (context, behavior) pairs from a random finite joint."""
    dim = int(rng.integers(2, max_regions + 1))
    n_contexts = int(rng.integers(1, max_contexts + 1))
    contexts = [rng.dirichlet(np.ones(dim)) for _ in range(n_contexts)]
    conditionals = [rng.dirichlet(np.ones(dim) * rng.uniform(0.3, 3.0)) for _ in range(n_contexts)]
    weights = rng.dirichlet(np.ones(n_contexts))
    samples = []
    for _ in range(n_samples):
        k = int(rng.choice(n_contexts, p=weights))
        noisy = conditionals[k]
        if rng.random() < 0.5:
            # Mix per-sample noise into the behavior to vary within a context.
            noisy = 0.7 * conditionals[k] + 0.3 * rng.dirichlet(np.ones(dim))
        samples.append((contexts[k].copy(), noisy / noisy.sum()))
    return samples


# -- check runner ------------------------------------------------------------


def run_oracle_checks(seed: int = 0, cases: int = 25) -> list[tuple[str, bool, str]]:
    """Compare production code against the oracles on seeded random inputs.

    Returns (name, passed, detail) triples; the CLI prints one line each.
    """
    from . import dispatch, matching, mireward
    from .hexgrid import build_synthetic_grid
    from .network import make_grid_network
    from .trips import feasible_trips
    from .fleet import Vehicle

    results: list[tuple[str, bool, str]] = []
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0AC1E]))
    net = make_grid_network(6, 6, edge_seconds=60.0, edge_meters=400.0)

    worst = 0.0
    ok = True
    for _ in range(cases):
        src = int(net.nodes[int(rng.integers(len(net.nodes)))])
        ref = bellman_ford_times(net, src)
        for dst in net.nodes:
            got = net.shortest_travel_time(src, dst)
            worst = max(worst, abs(got - ref[dst]))
            ok = ok and abs(got - ref[dst]) <= 1e-9
    results.append(("shortest-times-vs-bellman-ford", ok, f"max abs diff {worst:.2e}"))

    ok = True
    detail = ""
    for i in range(cases * 4):
        instance = random_matching_instance(rng)
        got = matching.solve(instance)
        want = best_assignment_value(instance)
        if abs(got.objective - want) > 1e-9 or matching.verify(instance, got):
            ok = False
            detail = f"case {i}: solver {got.objective!r} vs enumeration {want!r}"
            break
    results.append(("matcher-vs-enumeration", ok, detail or f"{cases * 4} instances"))

    grid1 = build_synthetic_grid(1, 1, net)
    ok = True
    detail = ""
    for i in range(cases * 2):
        start, offset, cap, onboard, pending, requests, params, now = random_trip_scenario(
            rng, net, with_commitments=bool(i % 2)
        )
        vehicle = Vehicle(id=0, capacity=cap, node=start, offset_s=offset,
                          onboard=list(onboard), pending=list(pending))
        got = {
            frozenset(t.request_ids)
            for t in feasible_trips(net, grid1, vehicle, grid1.regions[0],
                                    requests, params, now_s=now)
            if t.requests
        }
        want = {
            s
            for s in feasible_request_sets(net, params, now, start, offset, cap,
                                           list(onboard), list(pending), requests)
            if s
        }
        if got != want:
            ok = False
            detail = f"case {i}: {sorted(map(sorted, got))} vs {sorted(map(sorted, want))}"
            break
    results.append(("trips-vs-enumeration", ok, detail or f"{cases * 2} scenarios"))

    ok = True
    detail = ""
    for i in range(cases * 4):
        samples = random_joint_samples(rng)
        exact = exact_mi_double_sum(samples)
        post = mireward.TabularPosterior().fit(samples)
        bound = mireward.mi_lower_bound(samples, post).bound
        if bound > exact + 1e-9 or abs(bound - exact) > 1e-9:
            ok = False
            detail = f"case {i}: bound {bound!r} vs exact {exact!r}"
            break
    results.append(("mi-bound-vs-double-sum", ok, detail or f"{cases * 4} joints"))

    ok = True
    worst = 0.0
    for _ in range(cases * 4):
        q = rng.normal(0, 3, size=int(rng.integers(2, 20)))
        temp = float(rng.uniform(0.1, 5.0))
        got = dispatch.softmax_probs(q, temp)
        want = softmax_by_definition(q, temp)
        worst = max(worst, float(np.abs(got - want).max()))
        ok = ok and np.allclose(got, want, atol=1e-12)
    results.append(("softmax-vs-definition", ok, f"max abs diff {worst:.2e}"))

    ok = True
    detail = ""
    for i in range(cases):
        n = int(rng.integers(2, 12))
        positions = {vid: int(net.nodes[int(rng.integers(len(net.nodes)))]) for vid in range(n)}
        prev = {vid: int(rng.integers(dispatch.ACTION_DIM)) for vid in range(n)}
        k = int(rng.integers(1, 8))
        vid = int(rng.integers(n))
        got = dispatch.mean_action(prev, vid, positions, net, k)
        neigh = nearest_neighbors_by_scan(net, positions, vid, k)
        want = np.zeros(dispatch.ACTION_DIM)
        for u in neigh:
            want[prev[u]] += 1.0
        if neigh:
            want /= len(neigh)
        if not np.allclose(got, want, atol=1e-12):
            ok = False
            detail = f"case {i}: vid {vid} k {k}"
            break
    results.append(("mean-action-vs-scan", ok, detail or f"{cases} cases"))

    grid = build_synthetic_grid(7, 7, net)
    ok = True
    detail = ""
    for region in grid.regions:
        for k in (1, 2):
            if set(grid.ring(region, k)) != cube_ring_members(grid, region, k):
                ok = False
                detail = f"region {region} ring {k}"
                break
    results.append(("hex-rings-vs-cube-norm", ok, detail or "all regions, rings 1-2"))
    return results
