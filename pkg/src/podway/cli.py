"""podway command line: validate | run | sweep | bench | trace.

Exit codes: 0 ok, 1 validation failure, 2 usage or parse error, 3 runtime
invariant breach. PODWAY_LOG sets the log level (DEBUG, INFO, WARNING...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from .experiments import PlanError, load_plan, run_plan, write_run_files, write_summary
from .kernel import InvariantBreach
from .network import BENCHMARKS, ModelError, graph_from_dict, generate_benchmark, validate_graph
from .scenario import ScenarioError, load_scenario_doc, resolve, set_path, validate_scenario
from .simulation import run_replication

OK, INVALID, USAGE, BREACH = 0, 1, 2, 3

_BENCH_ALIASES = {
    "ring": "Ring", "linear": "Linear", "grid": "RectGrid", "rectgrid": "RectGrid",
    "center-periphery": "CenterPeriphery", "centerperiphery": "CenterPeriphery",
}

log = logging.getLogger("podway")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 2 through our own handler
        raise UsageError(message)


def _read_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None


def _value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _assignments(items: Sequence[str]) -> dict[str, Any]:
    out = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise UsageError(f"expected key=value, got {item!r}")
        out[key] = _value(val)
    return out


# -- validate -------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    first = _read_json(args.model)
    lines: list[str] = []
    if isinstance(first, dict) and "nodes" in first:
        try:
            g = graph_from_dict(first)
        except ModelError as exc:
            raise UsageError(f"{args.model}: {exc}") from None
        lines += validate_graph(g).lines()
        scen = args.scenario
        model_path: Optional[str] = str(Path(args.model).resolve())
    else:
        scen, model_path = args.model, None
        if args.scenario:
            raise UsageError("the first argument is a scenario; pass the model first")
    if scen and not lines:
        try:
            doc = load_scenario_doc(scen)
            if doc["network"] is None and model_path:
                doc["network"] = model_path
            sc = resolve(doc, Path(scen).parent)
        except ScenarioError as exc:
            print(f"scenario: {exc}")
            return INVALID
        lines += validate_scenario(sc)
    for line in lines:
        print(line)
    if not lines:
        print("ok")
    return INVALID if lines else OK


# -- run ------------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    try:
        doc = load_scenario_doc(args.scenario)
        overrides = _assignments(args.set or [])
        for flag, path in (("seed", "run.seed"), ("horizon", "run.horizon"), ("warmup", "run.warmup")):
            if getattr(args, flag) is not None:
                overrides[path] = getattr(args, flag)
        if args.trace:
            overrides["run.trace"] = True
        for k, v in overrides.items():
            try:
                set_path(doc, k, v)
            except KeyError:
                raise UsageError(f"unknown parameter path {k!r}") from None
        sc = resolve(doc, Path(args.scenario).parent)
    except ScenarioError as exc:
        print(f"scenario: {exc}", file=sys.stderr)
        return INVALID
    problems = validate_scenario(sc)
    if problems:
        for p in problems:
            print(p)
        return INVALID
    log.info("running %s seed=%d horizon=%gs", args.scenario, sc.run.seed, sc.run.horizon)
    try:
        out = run_replication(sc)
    except InvariantBreach as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return BREACH
    outdir = Path(args.output)
    write_run_files(out, outdir, doc)
    row = {"seed": sc.run.seed, **out.metrics.row()}
    write_summary(outdir / "summary.csv", list(row), [row])
    m = out.metrics
    print(f"groups appeared {m.groups_appeared}, served {m.groups_served}, reneged {m.groups_reneged}, "
          f"in system {m.groups_in_system}")
    print(f"mean wait {_fmt(m.wait_mean)} s, mean trip {_fmt(m.trip_time_mean)} s, "
          f"saturated {str(m.saturated).lower()}")
    print(f"results in {outdir}")
    return OK


def _fmt(x: Optional[float]) -> str:
    return "-" if x is None else f"{x:.2f}"


# -- sweep ----------------------------------------------------------------------


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        plan = load_plan(args.plan)
        results = run_plan(plan, args.output, args.workers)
    except PlanError as exc:
        print(str(exc), file=sys.stderr)
        return USAGE
    failed = [r for r in results if r.status != "ok"]
    print(f"{len(results)} runs, {len(failed)} failed; results in {args.output}")
    for r in failed:
        print(f"failed point {r.point_id} replication {r.replication}: {r.error}")
    return INVALID if failed else OK


# -- bench ----------------------------------------------------------------------


def cmd_bench(args: argparse.Namespace) -> int:
    kind = _BENCH_ALIASES.get(args.kind.lower(), args.kind)
    if kind not in BENCHMARKS:
        raise UsageError(f"unknown benchmark {args.kind!r}; choose from {', '.join(sorted(BENCHMARKS))}")
    params = _assignments(args.param or [])
    try:
        g = generate_benchmark(kind, **params)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{kind}: {exc}") from None
    report = validate_graph(g)
    if report:
        for line in report.lines():
            print(line)
        return INVALID
    text = g.dumps()
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
    return OK


# -- trace ----------------------------------------------------------------------


def cmd_trace(args: argparse.Namespace) -> int:
    kinds = set(args.filter.split(",")) if args.filter else None
    lo, hi = (args.between if args.between else (None, None))
    bad = 0
    try:
        fh = open(args.trace, encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"{args.trace}: {exc.strerror}") from None
    out = sys.stdout
    with fh:
        for n, line in enumerate(fh, 1):
            if kinds is None and lo is None:
                out.write(line)
                continue
            try:
                rec = json.loads(line)
                t = rec["t_us"] / 1e6
                kind = rec["kind"]
            except (json.JSONDecodeError, KeyError, TypeError):
                bad += 1
                print(f"warning: {args.trace}:{n}: not a trace record, skipped", file=sys.stderr)
                continue
            if kinds is not None and kind not in kinds:
                continue
            if lo is not None and not (lo <= t <= hi):
                continue
            out.write(line)
    return USAGE if bad else OK


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="podway", description="Discrete-event PRT microsimulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="check a network model and optionally a scenario")
    v.add_argument("model", help="model.json, or a scenario.json on its own")
    v.add_argument("scenario", nargs="?")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run one replication")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--horizon", type=float)
    r.add_argument("--warmup", type=float)
    r.add_argument("--trace", action="store_true", help="also write trace.jsonl")
    r.add_argument("--set", action="append", metavar="PATH=VALUE",
                   help="override a scenario parameter, e.g. vehicles.fleet_size=20")
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run an experiment plan")
    s.add_argument("plan")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--workers", type=int, help="override the plan's parallelism")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench", help="write a benchmark network model")
    b.add_argument("kind", help="ring, linear, grid or center-periphery")
    b.add_argument("--param", action="append", metavar="NAME=VALUE")
    b.add_argument("-o", "--output", default="-")
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("trace", help="filter a trace.jsonl file")
    t.add_argument("trace")
    t.add_argument("--filter", metavar="KIND[,KIND...]")
    t.add_argument("--between", nargs=2, type=float, metavar=("T1", "T2"), help="seconds")
    t.set_defaults(func=cmd_trace)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("PODWAY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"podway: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
