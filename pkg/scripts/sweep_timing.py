"""Run the bundled 64-point sweep with 1 and N workers; compare wall time and output.

    python3 scripts/sweep_timing.py --workers 4 --horizon 600 -o /tmp/sweep64
"""

import argparse
import time
from pathlib import Path

from podway.experiments import cpu_count, load_plan, run_plan

PLAN = Path(__file__).resolve().parents[1] / "scenarios" / "sweep64.json"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--plan", default=str(PLAN))
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--horizon", type=float, default=600.0)
    ap.add_argument("--warmup", type=float, default=120.0)
    ap.add_argument("-o", "--output", required=True)
    args = ap.parse_args()

    plan = load_plan(args.plan)
    plan.scenario["run"]["horizon"] = args.horizon
    plan.scenario["run"]["warmup"] = args.warmup
    out = Path(args.output)
    timings = {}
    for workers in (1, args.workers):
        t0 = time.perf_counter()
        results = run_plan(plan, out / f"workers{workers}", parallelism=workers)
        timings[workers] = time.perf_counter() - t0
        failed = sum(r.status != "ok" for r in results)
        print(f"workers {workers}: {len(results)} runs, {failed} failed, {timings[workers]:.1f} s")
    a = sorted((out / "workers1" / "summary.csv").read_text().splitlines())
    b = sorted((out / f"workers{args.workers}" / "summary.csv").read_text().splitlines())
    print(f"cpus available: {cpu_count()}")
    print(f"speedup: {timings[1] / timings[args.workers]:.2f}x; summaries identical: {a == b}")


if __name__ == "__main__":
    main()
