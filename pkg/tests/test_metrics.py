import json
from dataclasses import asdict

import pytest
from hypothesis import given, strategies as st

from podway.metrics import (MetricsAccumulator, StepIntegral, apply_warmup, p95, queue_profile, read_trace,
                            settling_time, steady_band, write_jsonl)
from podway.simulation import run_replication

from conftest import small_scenario
from replay_oracle import replay


@given(steps=st.lists(st.tuples(st.integers(0, 60), st.sampled_from([1, -1])), max_size=40),
       lo=st.integers(0, 30), span=st.integers(1, 40), init=st.integers(0, 3))
def test_step_integral_matches_per_tick_sum(steps, lo, span, init):
    steps = sorted(steps, key=lambda s: s[0])
    hi = lo + span
    si = StepIntegral(lo, hi, bin_us=7, value=init)
    for t, d in steps:
        si.step(t, d)
    si.close()
    level = {}
    for tick in range(0, 101):
        level[tick] = init + sum(d for t, d in steps if t <= tick)
    assert si.area == sum(level[tick] for tick in range(lo, hi))
    assert sum(si.bins) == si.area
    for k, b in enumerate(si.bins):
        a0, a1 = lo + 7 * k, min(lo + 7 * (k + 1), hi)
        assert b == sum(level[tick] for tick in range(a0, a1))


@given(steps=st.lists(st.tuples(st.integers(0, 99), st.sampled_from(["QueueJoin", "QueueLeave"])), max_size=50),
       width=st.integers(1, 30))
def test_queue_profile_matches_per_tick_levels(steps, width):
    steps = sorted(steps, key=lambda s: s[0])
    records = [{"t_us": t, "kind": k, "node": 0} for t, k in steps]
    records.append({"t_us": 3, "kind": "IdleStart", "node": 0})  # ignored
    prof = queue_profile(records, 100, width)
    level = [sum((1 if k == "QueueJoin" else -1) for t, k in steps if t <= tick) for tick in range(100)]
    assert len(prof) == max(100 // width, 1)
    for i, q in enumerate(prof):
        assert q == pytest.approx(sum(level[i * width:(i + 1) * width]) / width)


@given(profile=st.lists(st.floats(0, 20), min_size=1, max_size=40), lo=st.floats(0, 10),
       span=st.floats(0, 10), hold=st.integers(1, 8))
def test_settling_time_is_the_first_start_of_a_held_stretch(profile, lo, span, hold):
    band = (lo, lo + span)
    inside = [band[0] <= q <= band[1] for q in profile]
    starts = [k for k in range(len(profile) - hold + 1) if all(inside[k:k + hold])]
    want = starts[0] * 60.0 if starts else len(profile) * 60.0
    assert settling_time(profile, 60.0, band, hold * 60.0) == want


def test_steady_band_is_median_plus_minus_two_sd_with_a_floor():
    assert steady_band([5.0, 5.0, 5.0]) == (4.0, 6.0)
    lo, hi = steady_band([0.0, 10.0, 4.0, 6.0])
    assert (lo + hi) / 2 == 6.0 and hi - lo == pytest.approx(4 * 3.605551275463989)
    with pytest.raises(ValueError):
        steady_band([])


def test_p95_is_nearest_rank():
    assert p95([]) is None
    assert p95(list(range(1, 101))) == 95
    assert p95([3.0]) == 3.0
    assert p95(list(range(1, 21))) == 19


def _records(sc):
    out = run_replication(sc)
    return out, out.trace


@pytest.mark.parametrize("network, over", [
    ({"benchmark": "RectGrid", "params": {"rows": 2, "cols": 2}}, {"demand.default_lambda": 60}),
    ({"benchmark": "Ring", "params": {"n_stations": 5}},
     {"metrics.probe_node": 0, "fleet.empty_rule": "ReturnToCapacitor"}),
    ({"benchmark": "Linear", "params": {"n_stations": 3, "crossovers": [0]}},
     {"demand.renege_timeout": 120, "demand.default_lambda": 80, "vehicles.fleet_size": 6,
      "routing.failures": [{"segment": 3, "t_fail": 300, "t_restore": 600}]}),
])
def test_independent_replay_reproduces_metrics_exactly(network, over):
    sc = small_scenario(network, **over)
    out, trace = _records(sc)
    ref = replay(trace, sc.graph.station_ids(), sc.run.horizon_us, sc.run.warmup_us, sc.probe_node)
    assert asdict(out.metrics) == ref


def test_trace_file_round_trip_gives_the_same_metrics(tmp_path, grid_net):
    sc = small_scenario(grid_net)
    out = run_replication(sc)
    path = tmp_path / "trace.jsonl"
    write_jsonl(path, out.trace)
    again = apply_warmup(read_trace(path), sc.graph.station_ids(), sc.run.horizon, sc.run.warmup)
    assert again == out.metrics


def test_row_flattens_station_and_quarter_fields(grid_net):
    sc = small_scenario(grid_net, **{"run.horizon": 300.0, "run.warmup": 0.0})
    row = run_replication(sc).metrics.row()
    assert {"queue_q1", "queue_q4", "groups_appeared", "mileage_full_um"} <= set(row)
    assert any(k.startswith("st") and k.endswith("_wait_mean") for k in row)
    json.dumps(row)


def test_accumulator_detects_broken_conservation():
    acc = MetricsAccumulator([1, 2], 10_000_000, 0)
    acc.feed({"t_us": 5, "seq": 0, "kind": "GroupAppears", "group": 0, "node": 1,
              "detail": {"destination": 2, "size": 1}})
    with pytest.raises(AssertionError):
        acc.summarize(groups_in_system=0)
    assert acc.summarize(groups_in_system=1).groups_appeared == 1
