"""Street network: construction, shortest paths, routes, file I/O."""

import math

import numpy as np
import pytest

from ridepool.network import (
    ParseError,
    Route,
    StreetNetwork,
    UnknownNodeError,
    UnreachableError,
    ValidationError,
    load_network,
    make_grid_network,
    save_network,
)
from ridepool.oracles import bellman_ford_times


def random_network(rng, rows=4, cols=4, extra_edges=6):
    """Lattice with randomized travel times plus a few random shortcuts."""
    nodes = {r * cols + c: (float(r), float(c)) for r in range(rows) for c in range(cols)}
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if rr < rows and cc < cols:
                    v = rr * cols + cc
                    edges.append((u, v, float(rng.uniform(10, 120)), float(rng.uniform(100, 900))))
                    edges.append((v, u, float(rng.uniform(10, 120)), float(rng.uniform(100, 900))))
    ids = sorted(nodes)
    for _ in range(extra_edges):
        u, v = rng.choice(ids, size=2, replace=False)
        edges.append((int(u), int(v), float(rng.uniform(10, 120)), float(rng.uniform(100, 900))))
    return StreetNetwork(nodes, edges)


class TestConstruction:
    def test_grid_network_shape(self):
        net = make_grid_network(10, 10)
        assert len(net) == 100
        assert net.num_edges == 360  # 2 directions x (10*9 + 9*10) lattice links
        assert net.nodes == tuple(range(100))
        assert net.coord(0) == (0.0, 0.0)
        assert net.coord(23) == (2.0, 3.0)

    def test_grid_network_edge_weights(self):
        net = make_grid_network(3, 3, edge_seconds=45.0, edge_meters=250.0)
        for _, _, secs, meters in net.edges:
            assert secs == 45.0
            assert meters == 250.0

    def test_empty_network_rejected(self):
        with pytest.raises(ValidationError):
            StreetNetwork({}, [])

    def test_edge_to_unknown_node_rejected(self):
        with pytest.raises(ValidationError) as exc:
            StreetNetwork({0: (0, 0), 1: (0, 1)}, [(0, 1, 10, 10), (1, 7, 10, 10)])
        assert 7 in exc.value.nodes

    def test_nonpositive_edge_rejected(self):
        with pytest.raises(ValidationError):
            StreetNetwork({0: (0, 0), 1: (0, 1)}, [(0, 1, 0.0, 10), (1, 0, 10, 10)])
        with pytest.raises(ValidationError):
            StreetNetwork({0: (0, 0), 1: (0, 1)}, [(0, 1, 10, -5), (1, 0, 10, 10)])

    def test_dead_end_nodes_are_reported(self):
        with pytest.raises(ValidationError) as exc:
            StreetNetwork(
                {0: (0, 0), 1: (0, 1), 2: (1, 0)},
                [(0, 1, 10, 10), (1, 0, 10, 10)],
            )
        assert exc.value.nodes == (2,)

    def test_unknown_node_queries(self):
        net = make_grid_network(2, 2)
        with pytest.raises(UnknownNodeError):
            net.shortest_travel_time(0, 99)
        with pytest.raises(UnknownNodeError):
            net.coord(-1)

    def test_nearest_node_prefers_smaller_id_on_tie(self):
        net = make_grid_network(1, 3)  # nodes 0,1,2 at lon 0,1,2
        assert net.nearest_node(0.0, 0.5) == 0
        assert net.nearest_node(0.0, 1.9) == 2
        assert net.nearest_node(5.0, 1.0) == 1


class TestShortestPaths:
    def test_matches_bellman_ford_on_random_networks(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            net = random_network(rng)
            for src in net.nodes:
                expect = bellman_ford_times(net, src)
                for dst in net.nodes:
                    got = net.shortest_travel_time(src, dst)
                    assert got == pytest.approx(expect[dst], abs=1e-9)

    def test_grid_distance_is_manhattan(self):
        net = make_grid_network(5, 5, edge_seconds=60.0)
        assert net.shortest_travel_time(0, 24) == pytest.approx(8 * 60.0)
        assert net.shortest_travel_time(12, 12) == 0.0
        assert net.shortest_travel_time(3, 1) == pytest.approx(2 * 60.0)

    def test_unreachable_is_inf(self):
        net = StreetNetwork(
            {0: (0, 0), 1: (0, 1), 2: (1, 0)},
            [(0, 1, 10, 10), (1, 0, 10, 10), (2, 0, 10, 10)],
        )
        assert math.isinf(net.shortest_travel_time(0, 2))
        assert net.shortest_travel_time(2, 1) == pytest.approx(20.0)
        with pytest.raises(UnreachableError):
            net.shortest_route(0, 2)

    def test_repeated_queries_are_stable(self):
        net = make_grid_network(4, 4)
        first = net.shortest_travel_time(0, 15)
        for _ in range(3):
            assert net.shortest_travel_time(0, 15) == first
        assert net.shortest_route(0, 15) is net.shortest_route(0, 15)


class TestRoutes:
    def test_route_internal_consistency(self):
        rng = np.random.default_rng(7)
        net = random_network(rng)
        edge_map = {}
        for u, v, secs, meters in net.edges:
            cur = edge_map.get((u, v))
            if cur is None or (secs, meters) < cur:
                edge_map[(u, v)] = (secs, meters)
        for src in net.nodes:
            for dst in net.nodes:
                route = net.shortest_route(src, dst)
                assert route.nodes[0] == src
                assert route.nodes[-1] == dst
                assert route.offsets_s[0] == 0.0
                assert route.travel_time_s == pytest.approx(
                    net.shortest_travel_time(src, dst), abs=1e-9
                )
                for i in range(len(route.nodes) - 1):
                    pair = (route.nodes[i], route.nodes[i + 1])
                    assert pair in edge_map
                    assert route.offsets_s[i + 1] > route.offsets_s[i]

    def test_zero_length_route(self):
        net = make_grid_network(2, 2)
        route = net.shortest_route(3, 3)
        assert route.nodes == (3,)
        assert route.offsets_s == (0.0,)
        assert route.travel_time_s == 0.0
        assert route.length_m == 0.0

    def test_tie_break_is_lexicographic(self):
        # Diamond: 0->1->3 and 0->2->3 cost the same; expect the path via 1.
        net = StreetNetwork(
            {0: (0, 0), 1: (0, 1), 2: (1, 0), 3: (1, 1)},
            [
                (0, 1, 30, 100), (1, 3, 30, 100),
                (0, 2, 30, 100), (2, 3, 30, 100),
                (3, 0, 30, 100),
            ],
        )
        assert net.shortest_route(0, 3).nodes == (0, 1, 3)

    def test_grid_route_hugs_small_ids(self):
        # On a uniform lattice every monotone staircase ties; the smallest
        # node sequence walks the lowest row/column ids first.
        net = make_grid_network(3, 3, edge_seconds=10.0)
        assert net.shortest_route(0, 8).nodes == (0, 1, 2, 5, 8)

    def test_route_validation(self):
        with pytest.raises(ValueError):
            Route((0, 1), (0.0,), 10.0)
        with pytest.raises(ValueError):
            Route((), (), 0.0)


class TestFileIO:
    def test_round_trip_preserves_graph(self, tmp_path):
        rng = np.random.default_rng(3)
        net = random_network(rng)
        path = tmp_path / "net.txt"
        save_network(net, str(path))
        loaded = load_network(str(path))
        assert loaded.nodes == net.nodes
        assert loaded.edges == net.edges
        for src in (0, 5, 15):
            for dst in (0, 7, 11):
                assert loaded.shortest_travel_time(src, dst) == pytest.approx(
                    net.shortest_travel_time(src, dst), abs=1e-12
                )

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "net.txt"
        path.write_text(
            "# header comment\n"
            "\n"
            "N 0 0.0 0.0  # origin\n"
            "N 1 0.0 1.0\n"
            "E 0 1 30.0 500.0\n"
            "E 1 0 30.0 500.0\n"
        )
        net = load_network(str(path))
        assert len(net) == 2
        assert net.shortest_travel_time(0, 1) == 30.0

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "net.txt"
        path.write_text("N 0 0.0 0.0\nN 1 0.0 1.0\nE 0 1 oops 500\nE 1 0 30 500\n")
        with pytest.raises(ParseError) as exc:
            load_network(str(path))
        assert exc.value.line_no == 3

    def test_duplicate_node_id_rejected(self, tmp_path):
        path = tmp_path / "net.txt"
        path.write_text("N 0 0.0 0.0\nN 0 1.0 1.0\n")
        with pytest.raises(ParseError) as exc:
            load_network(str(path))
        assert exc.value.line_no == 2

    def test_unknown_record_type_rejected(self, tmp_path):
        path = tmp_path / "net.txt"
        path.write_text("X 1 2 3\n")
        with pytest.raises(ParseError):
            load_network(str(path))
