"""Parameter sweeps: Cartesian expansion, seeded replications, worker pool, result files.

Layout of an output directory::

    summary.csv           one row per (point, replication), sorted
    manifest.json         plan, then one entry per run with its status and files
    runs/<key>/           key = sha256 of the run's scenario document and seed
        scenario.json     the fully resolved document the run used
        metrics.json
        trips.jsonl
        trace.jsonl       only when tracing is on

Seeds are derive_seed(base_seed, point, replication), where point is the tuple
of (path, value) pairs, so editing one axis value never moves another point's
seeds.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from .kernel import InvariantBreach, derive_seed
from .metrics import write_jsonl
from .scenario import (ScenarioError, get_path, load_scenario_doc, merge_defaults, resolve,
                       set_path, validate_scenario)
from .simulation import RunOutput, run_replication

log = logging.getLogger(__name__)


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    path: str
    values: tuple[Any, ...]


@dataclass
class ExperimentPlan:
    scenario: dict[str, Any]  # full document, defaults merged
    base_dir: str = "."
    axes: list[Axis] = field(default_factory=list)
    replications: int = 1
    base_seed: int = 1
    parallelism: int = 1
    trace: bool = False

    def size(self) -> int:
        n = self.replications
        for ax in self.axes:
            n *= len(ax.values)
        return n


@dataclass(frozen=True)
class RunConfig:
    point_id: int
    point: tuple[tuple[str, Any], ...]
    replication: int
    seed: int


@dataclass
class RunResult:
    point_id: int
    point: tuple[tuple[str, Any], ...]
    replication: int
    seed: int
    status: str  # "ok" or "failed"
    row: dict[str, Any] = field(default_factory=dict)
    error: str = ""
    wall_time: float = 0.0
    run_dir: str = ""
    files: list[str] = field(default_factory=list)


_PLAN_KEYS = {"scenario", "axes", "replications", "base_seed", "parallelism", "trace"}


def plan_from_dict(raw: dict[str, Any], base_dir: str | Path = ".") -> ExperimentPlan:
    if not isinstance(raw, dict):
        raise PlanError("plan: expected an object")
    extra = sorted(set(raw) - _PLAN_KEYS)
    if extra:
        raise PlanError(f"plan: unknown key(s) {', '.join(extra)}")
    base = Path(base_dir)
    ref = raw.get("scenario")
    if isinstance(ref, str):
        p = ref if Path(ref).is_absolute() else base / ref
        try:
            doc = load_scenario_doc(p)
        except ScenarioError as exc:
            raise PlanError(f"plan: scenario: {exc}") from None
        scen_dir = Path(p).parent
    elif isinstance(ref, dict):
        try:
            doc = merge_defaults(ref)
        except ScenarioError as exc:
            raise PlanError(f"plan: scenario: {exc}") from None
        scen_dir = base
    else:
        raise PlanError("plan: scenario must be a file path or an inline document")
    # a relative network file is resolved against the scenario's own directory
    net = doc.get("network")
    if isinstance(net, str) and not Path(net).is_absolute():
        doc["network"] = str((scen_dir / net).resolve())
    axes = []
    for i, ax in enumerate(raw.get("axes") or []):
        if not isinstance(ax, dict) or set(ax) != {"path", "values"}:
            raise PlanError(f"plan: axes[{i}] needs exactly 'path' and 'values'")
        if not isinstance(ax["values"], list) or not ax["values"]:
            raise PlanError(f"plan: axes[{i}].values must be a non-empty list")
        axes.append(Axis(str(ax["path"]), tuple(ax["values"])))
    reps = raw.get("replications", 1)
    workers = raw.get("parallelism", 1)
    if not isinstance(reps, int) or reps < 1:
        raise PlanError("plan: replications must be an integer >= 1")
    if not isinstance(workers, int) or workers < 1:
        raise PlanError("plan: parallelism must be an integer >= 1")
    seed = raw.get("base_seed", 1)
    if not isinstance(seed, int):
        raise PlanError("plan: base_seed must be an integer")
    return ExperimentPlan(doc, str(base), axes, reps, seed, workers, bool(raw.get("trace", False)))


def load_plan(path: str | Path) -> ExperimentPlan:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise PlanError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise PlanError(f"{path}: {exc.strerror}") from None
    return plan_from_dict(raw, Path(path).parent)


def _check_path(doc: dict[str, Any], path: str) -> None:
    probe = copy.deepcopy(doc)
    try:
        get_path(probe, path)
    except (KeyError, ScenarioError):
        try:
            set_path(probe, path, None)  # open maps accept new keys
        except (KeyError, ScenarioError):
            raise PlanError(f"plan: parameter path {path!r} does not resolve") from None


def expand_plan(plan: ExperimentPlan) -> list[RunConfig]:
    """Every (point, replication) in lexicographic axis order, replications innermost."""
    for ax in plan.axes:
        _check_path(plan.scenario, ax.path)
    paths = [ax.path for ax in plan.axes]
    runs = []
    for pid, values in enumerate(itertools.product(*(ax.values for ax in plan.axes))):
        point = tuple(zip(paths, values))
        for rep in range(plan.replications):
            runs.append(RunConfig(pid, point, rep, derive_seed(plan.base_seed, point, rep)))
    return runs


def run_document(plan: ExperimentPlan, cfg: RunConfig) -> dict[str, Any]:
    doc = copy.deepcopy(plan.scenario)
    for path, value in cfg.point:
        set_path(doc, path, copy.deepcopy(value))
    doc["run"]["seed"] = cfg.seed
    doc["run"]["trace"] = plan.trace
    return doc


def run_key(doc: dict[str, Any]) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:20]


def write_run_files(out: RunOutput, run_dir: Path, doc: Optional[dict[str, Any]] = None) -> list[str]:
    """Write one replication's artifacts; returns the file names written."""
    run_dir.mkdir(parents=True, exist_ok=True)
    files = []
    if doc is not None:
        (run_dir / "scenario.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        files.append("scenario.json")
    (run_dir / "metrics.json").write_text(json.dumps(metrics_doc(out), indent=2, sort_keys=True) + "\n")
    files.append("metrics.json")
    write_jsonl(run_dir / "trips.jsonl", out.trips)
    files.append("trips.jsonl")
    if out.trace is not None:
        write_jsonl(run_dir / "trace.jsonl", out.trace)
        files.append("trace.jsonl")
    return files


def metrics_doc(out: RunOutput) -> dict[str, Any]:
    d = asdict(out.metrics)
    d["stations"] = {str(k): v for k, v in d["stations"].items()}
    d["vehicles"] = out.vehicles
    d["odometer_um"] = out.odometer_um
    d["separation_violations"] = out.diagnostics.separation_violations
    return d


def execute_run(plan: ExperimentPlan, cfg: RunConfig, outdir: str) -> RunResult:
    """One run, never raising: failures come back as a failed result."""
    res = RunResult(cfg.point_id, cfg.point, cfg.replication, cfg.seed, "failed")
    t0 = time.perf_counter()
    try:
        doc = run_document(plan, cfg)
        key = run_key(doc)
        res.run_dir = f"runs/{key}"
        sc = resolve(doc, plan.base_dir)
        problems = validate_scenario(sc)
        if problems:
            res.error = "; ".join(problems)
            return res
        out = run_replication(sc)
        res.files = write_run_files(out, Path(outdir) / res.run_dir, doc)
        res.row = out.metrics.row()
        res.status = "ok"
    except (ScenarioError, InvariantBreach, ValueError, KeyError, OSError) as exc:
        res.error = f"{type(exc).__name__}: {exc}"
    finally:
        res.wall_time = time.perf_counter() - t0
    return res


def check_writable(outdir: str | Path) -> None:
    """Fail before any run starts if results could not be saved."""
    p = Path(outdir)
    try:
        p.mkdir(parents=True, exist_ok=True)
        probe = p / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise PlanError(f"output directory {p} is not writable: {exc.strerror}") from None


def run_plan(plan: ExperimentPlan, outdir: str | Path,
             parallelism: Optional[int] = None) -> list[RunResult]:
    """Execute every run of the plan and persist the results; returns them sorted."""
    runs = expand_plan(plan)
    check_writable(outdir)
    workers = parallelism or plan.parallelism
    results: list[RunResult] = []
    if workers <= 1:
        for cfg in runs:
            results.append(execute_run(plan, cfg, str(outdir)))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(execute_run, plan, cfg, str(outdir)): cfg for cfg in runs}
            for fut in as_completed(futs):
                cfg = futs[fut]
                try:
                    results.append(fut.result())
                except Exception as exc:  # the worker process itself died
                    results.append(RunResult(cfg.point_id, cfg.point, cfg.replication, cfg.seed,
                                             "failed", error=f"worker crashed: {exc!r}"))
    results.sort(key=lambda r: (r.point_id, r.replication))
    for r in results:
        if r.status != "ok":
            log.warning("run point=%d rep=%d failed: %s", r.point_id, r.replication, r.error)
    persist(plan, results, outdir)
    return results


def summary_columns(plan: ExperimentPlan, results: Sequence[RunResult]) -> list[str]:
    cols = ["point", "replication", "seed", "status"] + [ax.path for ax in plan.axes]
    seen = set(cols)
    for r in results:
        for k in r.row:
            if k not in seen:
                seen.add(k)
                cols.append(k)
    return cols


def summary_rows(plan: ExperimentPlan, results: Sequence[RunResult]) -> list[dict[str, Any]]:
    rows = []
    for r in results:
        row = {"point": r.point_id, "replication": r.replication, "seed": r.seed, "status": r.status}
        for path, value in r.point:
            row[path] = json.dumps(value) if isinstance(value, (list, dict)) else value
        row.update(r.row)
        rows.append(row)
    return rows


def write_summary(path: str | Path, columns: Sequence[str], rows: Sequence[dict[str, Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), restval="", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})


def persist(plan: ExperimentPlan, results: Sequence[RunResult], outdir: str | Path) -> None:
    out = Path(outdir)
    write_summary(out / "summary.csv", summary_columns(plan, results), summary_rows(plan, results))
    manifest = {
        "plan": {
            "scenario": plan.scenario,
            "axes": [{"path": a.path, "values": list(a.values)} for a in plan.axes],
            "replications": plan.replications,
            "base_seed": plan.base_seed,
            "trace": plan.trace,
        },
        "runs": [
            {
                "point": r.point_id,
                "values": {p: v for p, v in r.point},
                "replication": r.replication,
                "seed": r.seed,
                "status": r.status,
                "error": r.error,
                "dir": r.run_dir,
                "files": r.files,
                "wall_time_s": round(r.wall_time, 3),
            }
            for r in results
        ],
        "failures": sum(1 for r in results if r.status != "ok"),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def read_summary(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cpu_count() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
