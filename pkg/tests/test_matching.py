"""Vehicle-trip assignment: optimality, constraints, fallback, serialization."""

import numpy as np
import pytest

from ridepool.matching import (
    REQUEST_MULTIPLICITY,
    UNKNOWN_CHOICE,
    VEHICLE_MULTIPLICITY,
    Assignment,
    MatchingError,
    MatchingInstance,
    TripChoice,
    instance_from_json,
    instance_to_json,
    objective_of,
    solve,
    verify,
)
from ridepool.oracles import best_assignment_value, random_matching_instance

EMPTY = TripChoice((), 0.0)


def simple_instance():
    return MatchingInstance.from_dict(
        {
            0: [EMPTY, TripChoice((1,), 6.0), TripChoice((1, 2), 9.0)],
            1: [EMPTY, TripChoice((2,), 5.0)],
            2: [EMPTY, TripChoice((7,), 3.0)],
        }
    )


class TestSolve:
    def test_hand_instance(self):
        # 0 takes {1}, 1 takes {2}, 2 takes {7}: 6+5+3 beats 9+0+3.
        inst = simple_instance()
        a = solve(inst)
        assert a.optimal
        assert a.objective == pytest.approx(14.0)
        assert a.as_dict() == {0: 1, 1: 1, 2: 1}
        assert verify(inst, a) == []

    def test_pooling_wins_when_it_pays(self):
        inst = MatchingInstance.from_dict(
            {
                0: [EMPTY, TripChoice((1,), 6.0), TripChoice((1, 2), 12.5)],
                1: [EMPTY, TripChoice((2,), 5.0)],
            }
        )
        a = solve(inst)
        assert a.objective == pytest.approx(12.5)
        assert a.as_dict() == {0: 2, 1: 0}

    def test_all_empty_when_nothing_pays(self):
        inst = MatchingInstance.from_dict({0: [EMPTY], 1: [EMPTY]})
        a = solve(inst)
        assert a.objective == 0.0
        assert a.as_dict() == {0: 0, 1: 0}
        assert a.optimal

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(41)
        for case in range(60):
            inst = random_matching_instance(rng)
            a = solve(inst)
            assert a.optimal, f"case {case} hit the node budget"
            assert verify(inst, a) == [], f"case {case} violated constraints"
            assert a.objective == pytest.approx(objective_of(inst, a), abs=1e-9)
            expect = best_assignment_value(inst)
            assert a.objective == pytest.approx(expect, abs=1e-9), f"case {case}"

    def test_adding_a_choice_never_hurts(self):
        rng = np.random.default_rng(43)
        for _ in range(25):
            inst = random_matching_instance(rng, max_vehicles=4, max_requests=6)
            base = solve(inst).objective
            vid, choices = inst.trips[0]
            req = int(rng.integers(0, 6))
            extra = TripChoice((req,), float(rng.uniform(0, 10)))
            grown_map = {v: list(ts) for v, ts in inst.trips}
            grown_map[vid] = list(choices) + [extra]
            grown = solve(MatchingInstance.from_dict(grown_map)).objective
            assert grown >= base - 1e-9

    def test_equal_optima_break_to_first_indices(self):
        # Both vehicles can serve request 0 for the same value.  Depth-first
        # search in index order with strict improvement keeps the first
        # optimum it reaches: the smallest index vector (0 stays empty).
        inst = MatchingInstance.from_dict(
            {
                0: [EMPTY, TripChoice((0,), 5.0)],
                1: [EMPTY, TripChoice((0,), 5.0)],
            }
        )
        a = solve(inst)
        assert a.objective == pytest.approx(5.0)
        assert a.as_dict() == {0: 0, 1: 1}

    def test_deterministic_across_calls(self):
        rng = np.random.default_rng(47)
        for _ in range(10):
            inst = random_matching_instance(rng)
            assert solve(inst) == solve(inst)

    def test_components_solved_independently(self):
        # Disjoint request pools: the joint optimum is the sum of parts.
        left = {0: [EMPTY, TripChoice((1,), 4.0)], 1: [EMPTY, TripChoice((1,), 7.0)]}
        right = {2: [EMPTY, TripChoice((9,), 2.0)]}
        joint = solve(MatchingInstance.from_dict({**left, **right}))
        assert joint.objective == pytest.approx(
            solve(MatchingInstance.from_dict(left)).objective
            + solve(MatchingInstance.from_dict(right)).objective
        )


class TestNodeBudget:
    def test_fallback_is_flagged_and_valid(self):
        rng = np.random.default_rng(53)
        degraded = 0
        for _ in range(20):
            inst = random_matching_instance(rng)
            a = solve(inst, node_budget=1)
            assert verify(inst, a) == []
            exact = best_assignment_value(inst)
            assert a.objective <= exact + 1e-9
            if not a.optimal:
                degraded += 1
        assert degraded > 0

    def test_budget_large_enough_recovers_optimum(self):
        rng = np.random.default_rng(59)
        inst = random_matching_instance(rng)
        a = solve(inst, node_budget=10_000_000)
        assert a.optimal
        assert a.objective == pytest.approx(best_assignment_value(inst), abs=1e-9)


class TestVerify:
    def test_duplicate_request_is_cited(self):
        inst = MatchingInstance.from_dict(
            {
                0: [EMPTY, TripChoice((5,), 1.0)],
                1: [EMPTY, TripChoice((5,), 1.0)],
            }
        )
        bad = Assignment(((0, 1), (1, 1)), 2.0, True)
        problems = verify(inst, bad)
        assert len(problems) == 1
        assert REQUEST_MULTIPLICITY in problems[0]
        assert "request 5" in problems[0]

    def test_missing_vehicle_is_cited(self):
        inst = simple_instance()
        bad = Assignment(((0, 0), (1, 0)), 0.0, True)
        problems = verify(inst, bad)
        assert any(VEHICLE_MULTIPLICITY in p and "vehicle 2" in p for p in problems)

    def test_out_of_range_index_is_cited(self):
        inst = simple_instance()
        bad = Assignment(((0, 9), (1, 0), (2, 0)), 0.0, True)
        problems = verify(inst, bad)
        assert any(UNKNOWN_CHOICE in p and "vehicle 0" in p for p in problems)

    def test_unknown_vehicle_is_cited(self):
        inst = simple_instance()
        bad = Assignment(((0, 0), (1, 0), (2, 0), (7, 0)), 0.0, True)
        problems = verify(inst, bad)
        assert any(UNKNOWN_CHOICE in p and "vehicle 7" in p for p in problems)


class TestValidation:
    def test_empty_trip_required(self):
        with pytest.raises(MatchingError, match="empty"):
            MatchingInstance.from_dict({0: [TripChoice((1,), 2.0)]})

    def test_trip_requests_must_be_sorted_unique(self):
        with pytest.raises(MatchingError):
            TripChoice((2, 1), 1.0)
        with pytest.raises(MatchingError):
            TripChoice((1, 1), 1.0)

    def test_duplicate_vehicle_rejected(self):
        with pytest.raises(MatchingError):
            MatchingInstance(((0, (EMPTY,)), (0, (EMPTY,))))

    def test_unknown_vehicle_lookup(self):
        with pytest.raises(MatchingError):
            simple_instance().choices(99)


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(61)
        for _ in range(10):
            inst = random_matching_instance(rng)
            again = instance_from_json(instance_to_json(inst))
            assert again == inst
            assert solve(again) == solve(inst)

    def test_json_is_stable(self):
        inst = simple_instance()
        assert instance_to_json(inst) == instance_to_json(inst)

    def test_bad_payload_rejected(self):
        with pytest.raises(MatchingError):
            instance_from_json('{"vehicles": [{"id": 0}]}')
        with pytest.raises(MatchingError):
            instance_from_json('{"nope": 1}')
