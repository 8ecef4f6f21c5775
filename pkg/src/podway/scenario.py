"""Scenario documents: defaults, strict loading, cross-validation.

A scenario is a JSON object merged over DEFAULTS. Unknown keys are rejected,
so a typo never silently falls back to a default. `resolve` turns the merged
document into the typed objects the simulator consumes.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .demand import DemandModel, TriangularDist, Window, uniform_odm
from .fleet import AllocationRule, EmptyRule, FleetPolicy
from .kernel import ALL_KINDS, ReplicationConfig
from .motion import KeepingRule, MergeRule, VehicleSpec
from .network import (ModelError, NetworkGraph, default_sector_len, generate_benchmark,
                      graph_from_dict, load_graph, sectorize, validate_graph)
from .routing import CostModel

FOREVER = 1e12  # seconds; end of an open-ended arrival window

# Every numeric parameter has a default here and nowhere else.
DEFAULTS: dict[str, Any] = {
    "network": None,
    "demand": {
        "default_lambda": 30.0,  # groups per hour per station
        "profiles": {},  # station id -> lambda or [[start_s, end_s, lambda], ...]
        "odm": "uniform",
        "odm_windows": [],  # [{"start": s, "odm": [[...]]}]
        "group_size": [0.25, 0.25, 0.25, 0.25],
        "board_time": {"min": 8.0, "mode": 8.0, "max": 8.0},
        "alight_time": {"min": 8.0, "mode": 8.0, "max": 8.0},
        "renege_timeout": None,
    },
    "vehicles": {
        "capacity": 4,
        "v_max": 12.0,
        "a_max": 1.5,
        "b_max": 2.5,
        "b_emerg": 5.0,
        "s_static": 10.0,
        "length": 3.5,
        "fleet_size": 10,
        "placement": "capacitors",  # or "stations"
    },
    "motion": {
        "rule": "optimal",
        "sector_len": None,  # metres; None -> s_static / sector_factor
        "sector_factor": 2.5,
        "merge_rule": "first_arrival",
        "priority": {},  # join node -> in-segment that goes first under fixed_priority
        "station_speed": 5.0,
    },
    "routing": {
        "w_len": 1.0,
        "w_time": 0.0,
        "w_type": 0.0,
        "w_cong": 0.0,
        "type_penalty": {},  # segment id -> penalty
        "congestion_horizon": 60.0,
        "rerouting": False,
        "failures": [],  # [{"segment": id, "t_fail": s, "t_restore": s or null}]
    },
    "fleet": {
        "allocation": "NearestIdle",
        "empty_rule": "StayAtStation",
        "stay_cap": 1,
        "rebalance_threshold": 2,
    },
    "registration": None,  # list of event kinds written to the trace; None = all
    "metrics": {"probe_node": None},
    "run": {"horizon": 7200.0, "warmup": 0.0, "seed": 1, "trace": False},
}

# keys whose values are free-form mappings keyed by ids
_OPEN_MAPS = {"demand.profiles", "motion.priority", "routing.type_penalty"}


class ScenarioError(ValueError):
    """A scenario that cannot be read or merged (as opposed to one that fails validation)."""


def merge_defaults(doc: dict[str, Any], defaults: dict[str, Any] = DEFAULTS,
                   prefix: str = "") -> dict[str, Any]:
    if not isinstance(doc, dict):
        raise ScenarioError(f"{prefix or 'scenario'}: expected an object")
    unknown = sorted(set(doc) - set(defaults))
    if unknown:
        raise ScenarioError(f"{prefix or 'scenario'}: unknown key(s) {', '.join(prefix + k for k in unknown)}")
    out = copy.deepcopy(defaults)
    for k, v in doc.items():
        path = prefix + k
        if isinstance(defaults[k], dict) and path not in _OPEN_MAPS and k != "network":
            out[k] = merge_defaults(v, defaults[k], path + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def get_path(doc: dict[str, Any], path: str) -> Any:
    cur: Any = doc
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise KeyError(path)
        cur = cur[part]
    return cur


def set_path(doc: dict[str, Any], path: str, value: Any) -> None:
    """Set a dotted path in a merged document; the path must already exist."""
    parts = path.split(".")
    cur: Any = doc
    for part in parts[:-1]:
        if not isinstance(cur, dict) or part not in cur:
            raise KeyError(path)
        cur = cur[part]
    if not isinstance(cur, dict) or (parts[-1] not in cur and not _open_parent(path)):
        raise KeyError(path)
    cur[parts[-1]] = copy.deepcopy(value)


def _open_parent(path: str) -> bool:
    return path.rsplit(".", 1)[0] in _OPEN_MAPS


@dataclass(frozen=True)
class Failure:
    segment: int
    t_fail: float
    t_restore: Optional[float] = None


@dataclass
class Scenario:
    """A fully resolved scenario."""

    graph: NetworkGraph
    demand: DemandModel
    spec: VehicleSpec
    fleet_size: int
    placement: str
    rule: KeepingRule
    merge_rule: MergeRule
    priority: dict[int, int]
    station_speed: float
    sector_len: float
    costs: CostModel
    congestion_horizon: float
    rerouting: bool
    failures: list[Failure]
    policy: FleetPolicy
    registration: Optional[frozenset[str]]
    probe_node: Optional[int]
    run: ReplicationConfig
    doc: dict[str, Any] = field(default_factory=dict)

    def lookahead(self) -> float:
        s = self.spec
        return (self.graph.max_sector_length() + s.v_max ** 2 / (2 * s.b_max)
                + s.length + s.s_static + 1.0)


def _network(ref: Any, base_dir: Path) -> NetworkGraph:
    if ref is None:
        raise ScenarioError("network: missing")
    if isinstance(ref, str):
        p = Path(ref)
        if not p.is_absolute():
            p = base_dir / p
        try:
            return load_graph(p)
        except OSError as exc:
            raise ScenarioError(f"network: cannot read {p}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"network: {p}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if isinstance(ref, dict) and "benchmark" in ref:
        extra = sorted(set(ref) - {"benchmark", "params"})
        if extra:
            raise ScenarioError(f"network: unknown key(s) {', '.join(extra)}")
        try:
            return generate_benchmark(ref["benchmark"], **dict(ref.get("params") or {}))
        except (ValueError, TypeError) as exc:
            raise ScenarioError(f"network: {exc}") from None
    if isinstance(ref, dict):
        return graph_from_dict(ref)
    raise ScenarioError("network: expected a file path, a benchmark record or an inline model")


def _windows(spec: Any, where: str) -> list[Window]:
    if isinstance(spec, (int, float)):
        return [Window(0.0, FOREVER, float(spec))]
    try:
        return [Window(float(a), float(b), float(lam)) for a, b, lam in spec]
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: expected a number or a list of [start, end, lambda]") from None


def _tri(d: Any, where: str) -> TriangularDist:
    if isinstance(d, (int, float)):
        return TriangularDist.constant(float(d))
    if not isinstance(d, dict) or set(d) != {"min", "mode", "max"}:
        raise ScenarioError(f"{where}: expected a number or {{min, mode, max}}")
    return TriangularDist(float(d["min"]), float(d["mode"]), float(d["max"]))


def _enum(cls: Any, value: Any, where: str) -> Any:
    try:
        return cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise ScenarioError(f"{where}: {value!r} is not one of {choices}") from None


def resolve(doc: dict[str, Any], base_dir: Path | str = ".") -> Scenario:
    """Build typed objects from a merged document (see merge_defaults)."""
    base_dir = Path(base_dir)
    try:
        graph = _network(doc["network"], base_dir)
    except ModelError as exc:
        raise ScenarioError(f"network: {exc}") from None
    veh = doc["vehicles"]
    spec = VehicleSpec(
        capacity=int(veh["capacity"]), v_max=float(veh["v_max"]), a_max=float(veh["a_max"]),
        b_max=float(veh["b_max"]), b_emerg=float(veh["b_emerg"]),
        s_static=float(veh["s_static"]), length=float(veh["length"]),
    )
    mot = doc["motion"]
    if mot["sector_len"] is not None:
        sector_len = float(mot["sector_len"])
        if not sector_len > 0:
            raise ScenarioError("motion.sector_len must be positive")
    else:
        try:
            sector_len = default_sector_len(spec.s_static, float(mot["sector_factor"]))
        except ValueError as exc:
            raise ScenarioError(f"motion: {exc}") from None
    graph = sectorize(graph, sector_len)

    dem = doc["demand"]
    stations = graph.station_ids()
    default = _windows(dem["default_lambda"], "demand.default_lambda")
    profiles = {s: default for s in stations}
    for key, val in dem["profiles"].items():
        profiles[int(key)] = _windows(val, f"demand.profiles[{key}]")
    odm = dem["odm"]
    if odm == "uniform":
        if len(stations) < 2:
            raise ScenarioError("demand.odm: a uniform matrix needs at least two stations")
        odm = uniform_odm(len(stations))
    odm_windows = []
    for k, w in enumerate(dem["odm_windows"]):
        if not isinstance(w, dict) or set(w) != {"start", "odm"}:
            raise ScenarioError(f"demand.odm_windows[{k}]: expected {{start, odm}}")
        mat = uniform_odm(len(stations)) if w["odm"] == "uniform" else w["odm"]
        odm_windows.append((float(w["start"]), mat))
    demand = DemandModel(
        stations=stations, profiles=profiles, odm=odm,
        group_size_dist=[float(p) for p in dem["group_size"]],
        board_time=_tri(dem["board_time"], "demand.board_time"),
        alight_time=_tri(dem["alight_time"], "demand.alight_time"),
        renege_timeout=None if dem["renege_timeout"] is None else float(dem["renege_timeout"]),
        odm_windows=sorted(odm_windows, key=lambda w: w[0]),
    )

    rt = doc["routing"]
    costs = CostModel(
        w_len=float(rt["w_len"]), w_time=float(rt["w_time"]), w_type=float(rt["w_type"]),
        w_cong=float(rt["w_cong"]), v_max=spec.v_max,
        type_penalty={int(k): float(v) for k, v in rt["type_penalty"].items()},
    )
    failures = []
    for k, f in enumerate(rt["failures"]):
        if not isinstance(f, dict) or not {"segment", "t_fail"} <= set(f) <= {"segment", "t_fail", "t_restore"}:
            raise ScenarioError(f"routing.failures[{k}]: expected {{segment, t_fail, t_restore?}}")
        failures.append(Failure(int(f["segment"]), float(f["t_fail"]),
                                None if f.get("t_restore") is None else float(f["t_restore"])))

    fl = doc["fleet"]
    policy = FleetPolicy(
        allocation=_enum(AllocationRule, fl["allocation"], "fleet.allocation"),
        empty_rule=_enum(EmptyRule, fl["empty_rule"], "fleet.empty_rule"),
        stay_cap=int(fl["stay_cap"]), rebalance_threshold=int(fl["rebalance_threshold"]),
    )
    reg = doc["registration"]
    if reg is not None:
        bad = sorted(set(reg) - ALL_KINDS)
        if bad:
            raise ScenarioError(f"registration: unknown event kind(s) {', '.join(bad)}")
        reg = frozenset(reg)
    run = doc["run"]
    cfg = ReplicationConfig(horizon=float(run["horizon"]), warmup=float(run["warmup"]),
                            seed=int(run["seed"]), trace=bool(run["trace"]))
    placement = veh["placement"]
    if placement not in ("capacitors", "stations"):
        raise ScenarioError("vehicles.placement: expected 'capacitors' or 'stations'")
    probe = doc["metrics"]["probe_node"]
    return Scenario(
        graph=graph, demand=demand, spec=spec, fleet_size=int(veh["fleet_size"]),
        placement=placement,
        rule=_enum(KeepingRule, mot["rule"], "motion.rule"),
        merge_rule=_enum(MergeRule, mot["merge_rule"], "motion.merge_rule"),
        priority={int(k): int(v) for k, v in mot["priority"].items()},
        station_speed=float(mot["station_speed"]), sector_len=sector_len,
        costs=costs, congestion_horizon=float(rt["congestion_horizon"]),
        rerouting=bool(rt["rerouting"]), failures=failures, policy=policy,
        registration=reg, probe_node=None if probe is None else int(probe), run=cfg, doc=doc,
    )


def validate_scenario(sc: Scenario) -> list[str]:
    """Every cross-check between the scenario and its network; empty when runnable."""
    g = sc.graph
    out = validate_graph(g).lines()
    out += sc.spec.problems()
    out += sc.demand.problems(sc.run.horizon, sc.spec.capacity)
    out += sc.run.problems()
    out += sc.policy.problems()
    if sc.fleet_size < 0:
        out.append("vehicles.fleet_size must be >= 0")
    caps = g.capacitor_ids()
    room = sum(g.capacitors[c].capacity for c in caps if c in g.capacitors)
    if sc.placement == "capacitors":
        if not caps and sc.fleet_size > 0:
            out.append("vehicles: placement 'capacitors' but the network has no capacitor")
        elif sc.fleet_size > room:
            out.append(f"vehicles: fleet_size {sc.fleet_size} exceeds total capacitor capacity {room}")
    else:
        berths = sum(g.stations[s].berths for s in g.station_ids() if s in g.stations)
        if sc.fleet_size > berths + room:
            out.append(f"vehicles: fleet_size {sc.fleet_size} exceeds total berths {berths}"
                       f" plus capacitor capacity {room}")
    if caps and sc.placement != "capacitors" and sc.fleet_size > room:
        # every vehicle must still be able to park
        out.append(f"vehicles: fleet_size {sc.fleet_size} exceeds total capacitor capacity {room}")
    if not sc.station_speed > 0:
        out.append("motion.station_speed must be positive")
    if sc.station_speed > sc.spec.v_max:
        out.append("motion.station_speed exceeds v_max")
    for j, sid in sc.priority.items():
        if j not in g.nodes or sid not in g.in_segs.get(j, []):
            out.append(f"motion.priority: segment {sid} does not enter join {j}")
    for f in sc.failures:
        if f.segment not in g.segments:
            out.append(f"routing.failures: unknown segment {f.segment}")
        if f.t_restore is not None and f.t_restore <= f.t_fail:
            out.append(f"routing.failures: segment {f.segment} restored before it fails")
    for sid in sc.costs.type_penalty:
        if sid not in g.segments:
            out.append(f"routing.type_penalty: unknown segment {sid}")
    for name in ("w_len", "w_time", "w_type", "w_cong"):
        if getattr(sc.costs, name) < 0:
            out.append(f"routing.{name} must be >= 0")
    if sc.costs.w_len == 0 and sc.costs.w_time == 0:
        out.append("routing: w_len and w_time cannot both be zero")
    if not sc.congestion_horizon > 0:
        out.append("routing.congestion_horizon must be positive")
    if sc.probe_node is not None and sc.probe_node not in g.nodes:
        out.append(f"metrics.probe_node: unknown node {sc.probe_node}")
    if not math.isfinite(sc.run.horizon):
        out.append("run.horizon must be finite")
    return out


def load_scenario_doc(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from None
    return merge_defaults(raw)


def load_scenario(path: str | Path, overrides: Optional[dict[str, Any]] = None) -> Scenario:
    doc = load_scenario_doc(path)
    for k, v in (overrides or {}).items():
        set_path(doc, k, v)
    return resolve(doc, Path(path).parent)


def scenario_from_dict(raw: dict[str, Any], base_dir: Path | str = ".",
                       overrides: Optional[dict[str, Any]] = None) -> Scenario:
    doc = merge_defaults(raw)
    for k, v in (overrides or {}).items():
        set_path(doc, k, v)
    return resolve(doc, base_dir)
