import json

import pytest
from hypothesis import given, settings, strategies as st

from podway.network import (
    BENCHMARKS,
    ModelError,
    NodeKind,
    generate_benchmark,
    graph_from_dict,
    grid_station_count,
    sectorize,
    validate_graph,
)


def tiny_model():
    return {
        "nodes": [
            {"id": 0, "kind": "Station", "position": [0, 0]},
            {"id": 1, "kind": "Fork", "position": [100, 0]},
            {"id": 2, "kind": "Station", "position": [200, 0]},
            {"id": 3, "kind": "Join", "position": [100, 50]},
        ],
        "segments": [
            {"id": 0, "from": 0, "to": 1},
            {"id": 1, "from": 1, "to": 2},
            {"id": 2, "from": 2, "to": 3, "length": 150},
            {"id": 3, "from": 1, "to": 3, "length": 60},
            {"id": 4, "from": 3, "to": 0, "length": 120},
        ],
        "stations": {"0": {}, "2": {"layout": "InLine", "berths": 2}},
    }


def test_model_round_trip_and_default_length():
    g = graph_from_dict(tiny_model())
    assert validate_graph(g).ok
    assert g.segments[0].length == 100.0
    again = graph_from_dict(json.loads(g.dumps()))
    assert again.to_dict() == g.to_dict()


@pytest.mark.parametrize("mutate, rule", [
    (lambda m: m["segments"].append({"id": 9, "from": 0, "to": 1, "length": 5}), "parallel"),
    (lambda m: m["segments"].append({"id": 9, "from": 2, "to": 2, "length": 5}), "self-loop"),
    (lambda m: m["segments"][2].update(length=-1), "length"),
    (lambda m: m["segments"].append({"id": 9, "from": 0, "to": 42, "length": 5}), "endpoint"),
    (lambda m: m["segments"].pop(3), "degree"),
    (lambda m: m["stations"].pop("2"), "station-spec"),
    (lambda m: m["stations"]["2"].update(berths=0), "station-spec"),
    (lambda m: m["segments"][2].update(v_limit=0), "v_limit"),
])
def test_each_rule_is_reported(mutate, rule):
    m = tiny_model()
    mutate(m)
    assert rule in validate_graph(graph_from_dict(m)).rules()


def test_disconnected_graph_is_reported():
    m = tiny_model()
    m["nodes"] += [{"id": 7, "kind": "Station", "position": [0, 0]},
                   {"id": 8, "kind": "Station", "position": [1, 0]}]
    m["segments"] += [{"id": 7, "from": 7, "to": 8, "length": 1}, {"id": 8, "from": 8, "to": 7, "length": 1}]
    m["stations"].update({"7": {}, "8": {}})
    rep = validate_graph(graph_from_dict(m))
    assert rep.rules() == {"connectivity"}
    assert len(rep.violations) == 2


@pytest.mark.parametrize("bad, msg", [
    ({"nodes": [], "segments": [], "extra": 1}, "unknown"),
    ({"nodes": [{"id": 0, "kind": "Spaceport", "position": [0, 0]}], "segments": []}, "unknown kind"),
    ({"nodes": [{"id": 0, "kind": "Station", "position": [0]}], "segments": []}, "position"),
])
def test_malformed_documents_raise(bad, msg):
    with pytest.raises(ModelError, match=msg):
        graph_from_dict(bad)


def test_every_benchmark_is_valid_with_defaults():
    for name in BENCHMARKS:
        g = generate_benchmark(name)
        assert validate_graph(g).ok, name
        assert g.station_ids()
        assert len(g.capacitor_ids()) == 1


@settings(max_examples=25, deadline=None)
@given(rows=st.integers(2, 4), cols=st.integers(2, 4))
def test_grid_counts(rows, cols):
    g = generate_benchmark("RectGrid", rows=rows, cols=cols)
    assert len(g.station_ids()) == grid_station_count(rows, cols)
    kinds = [n.kind for n in g.nodes.values()]
    assert kinds.count(NodeKind.JOIN) == kinds.count(NodeKind.FORK) == rows * cols


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 6), data=st.data())
def test_linear_with_any_crossovers_is_valid(n, data):
    xs = data.draw(st.sets(st.integers(0, n - 2)))
    g = generate_benchmark("Linear", n_stations=n, crossovers=sorted(xs))
    assert validate_graph(g).ok
    assert len(g.station_ids()) == 2 * n


def test_bad_benchmark_parameters():
    with pytest.raises(ValueError):
        generate_benchmark("Ring", n_stations=1)
    with pytest.raises(ValueError):
        generate_benchmark("Linear", n_stations=3, crossovers=[5])
    with pytest.raises(ValueError):
        generate_benchmark("Nope")
    with pytest.raises(ValueError):
        generate_benchmark("Ring", wheels=3)


def test_benchmark_generation_is_deterministic():
    a = generate_benchmark("CenterPeriphery", spokes=5).dumps()
    b = generate_benchmark("CenterPeriphery", spokes=5).dumps()
    assert a == b


@given(target=st.floats(1.0, 500.0))
def test_sectors_cover_each_segment_and_stay_near_the_target(target):
    g = sectorize(generate_benchmark("Ring"), target)
    for s in g.segments.values():
        assert s.sector_count >= 1
        assert s.boundary(s.sector_count) == s.length
        assert s.boundary(0) == 0.0
        if s.sector_count > 1:
            assert s.sector_length <= 2 * target
