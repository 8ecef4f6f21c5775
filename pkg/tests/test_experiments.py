import json

import pytest

from podway.experiments import (
    PlanError,
    expand_plan,
    load_plan,
    plan_from_dict,
    read_summary,
    run_plan,
)

from conftest import SCENARIOS

SHORT = {"network": {"benchmark": "RectGrid", "params": {"rows": 2, "cols": 2}},
         "run": {"horizon": 240.0, "warmup": 0.0}}


def test_bundled_sweep_expands_to_sixty_four_runs():
    plan = load_plan(SCENARIOS / "sweep64.json")
    runs = expand_plan(plan)
    assert plan.size() == len(runs) == 64
    assert len({r.point for r in runs}) == 64
    assert len({r.seed for r in runs}) == 64
    # lexicographic: the last axis varies fastest
    assert [v for _, v in runs[1].point] == [8, 30, 0.25]
    assert [v for _, v in runs[4].point] == [8, 45, 0.0]


def test_replications_are_innermost_and_seeds_stable_under_axis_edits():
    raw = {"scenario": SHORT, "axes": [{"path": "vehicles.fleet_size", "values": [4, 6]}],
           "replications": 3, "base_seed": 7}
    runs = expand_plan(plan_from_dict(raw))
    assert [(r.point_id, r.replication) for r in runs] == [(p, k) for p in range(2) for k in range(3)]
    edited = dict(raw, axes=[{"path": "vehicles.fleet_size", "values": [4, 9]}])
    again = expand_plan(plan_from_dict(edited))
    assert [r.seed for r in again[:3]] == [r.seed for r in runs[:3]]
    assert [r.seed for r in again[3:]] != [r.seed for r in runs[3:]]


@pytest.mark.parametrize("raw, msg", [
    ({"scenario": SHORT, "bogus": 1}, "unknown key"),
    ({"scenario": SHORT, "axes": [{"path": "x"}]}, "exactly"),
    ({"scenario": SHORT, "axes": [{"path": "vehicles.fleet_size", "values": []}]}, "non-empty"),
    ({"scenario": SHORT, "replications": 0}, "replications"),
    ({"scenario": SHORT, "parallelism": "many"}, "parallelism"),
    ({"scenario": 5}, "file path or an inline"),
])
def test_malformed_plans(raw, msg):
    with pytest.raises(PlanError, match=msg):
        plan_from_dict(raw)


def test_unknown_axis_path_fails_before_running(tmp_path):
    plan = plan_from_dict({"scenario": SHORT, "axes": [{"path": "vehicles.wheels", "values": [1]}]})
    with pytest.raises(PlanError, match="does not resolve"):
        run_plan(plan, tmp_path)
    assert not (tmp_path / "summary.csv").exists()


def _small_plan():
    return plan_from_dict({
        "scenario": SHORT,
        "axes": [{"path": "vehicles.fleet_size", "values": [4, 500, 8]},
                 {"path": "motion.rule", "values": ["optimal", "careful"]}],
        "replications": 2, "base_seed": 11,
    })


def test_a_failing_point_does_not_stop_the_others(tmp_path):
    results = run_plan(_small_plan(), tmp_path, parallelism=1)
    bad = [r for r in results if r.status != "ok"]
    assert {dict(r.point)["vehicles.fleet_size"] for r in bad} == {500}
    assert len(bad) == 4 and all("capacitor capacity" in r.error for r in bad)
    rows = read_summary(tmp_path / "summary.csv")
    assert len(rows) == 12
    assert [r["status"] for r in rows].count("failed") == 4
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["failures"] == 4
    ok = next(r for r in manifest["runs"] if r["status"] == "ok")
    assert set(ok["files"]) == {"scenario.json", "metrics.json", "trips.jsonl"}
    run_dir = tmp_path / ok["dir"]
    saved = json.loads((run_dir / "scenario.json").read_text())
    assert saved["run"]["seed"] == ok["seed"]


def test_worker_count_does_not_change_results(tmp_path):
    run_plan(_small_plan(), tmp_path / "one", parallelism=1)
    run_plan(_small_plan(), tmp_path / "two", parallelism=2)
    a = (tmp_path / "one" / "summary.csv").read_text()
    b = (tmp_path / "two" / "summary.csv").read_text()
    assert a == b
    for d in (tmp_path / "one" / "runs").iterdir():
        other = tmp_path / "two" / "runs" / d.name
        for f in d.iterdir():
            assert f.read_bytes() == (other / f.name).read_bytes()


def test_unwritable_output_is_reported(tmp_path):
    blocker = tmp_path / "a-file"
    blocker.write_text("")
    with pytest.raises(PlanError, match="not writable"):
        run_plan(_small_plan(), blocker / "out")


def test_relative_network_file_follows_the_scenario(tmp_path):
    from podway.network import generate_benchmark
    sub = tmp_path / "scen"
    sub.mkdir()
    (sub / "net.json").write_text(generate_benchmark("Ring", n_stations=3).dumps())
    (sub / "s.json").write_text(json.dumps({"network": "net.json", "run": {"horizon": 120}}))
    (tmp_path / "plan.json").write_text(json.dumps({"scenario": "scen/s.json"}))
    results = run_plan(load_plan(tmp_path / "plan.json"), tmp_path / "out")
    assert [r.status for r in results] == ["ok"]
