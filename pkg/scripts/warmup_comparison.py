"""Start-up transient with the fleet pre-placed at stations vs. starting in capacitors.

Prints the seed-averaged total queue for the first minutes and each pair's
time to the steady band.

    python3 scripts/warmup_comparison.py --seeds 10 --empty-rule StayAtStation
"""

import argparse
import statistics
from pathlib import Path

from podway.kernel import to_us
from podway.metrics import queue_profile, settling_time, steady_band
from podway.scenario import load_scenario
from podway.simulation import run_replication

SCENARIO = Path(__file__).resolve().parents[1] / "scenarios" / "warmup_grid.json"


def profile(path: str, seed: int, placement: str, rule: str, window: float) -> list[float]:
    sc = load_scenario(path, {"run.seed": seed, "vehicles.placement": placement, "fleet.empty_rule": rule})
    return queue_profile(run_replication(sc).trace, sc.run.horizon_us, to_us(window))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default=str(SCENARIO))
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--first-seed", type=int, default=1)
    ap.add_argument("--empty-rule", default="StayAtStation")
    ap.add_argument("--window", type=float, default=60.0, help="seconds per queue sample")
    ap.add_argument("--hold", type=float, default=300.0, help="seconds the band must hold")
    ap.add_argument("--show", type=int, default=15, help="leading windows to print")
    args = ap.parse_args()

    warm, cold, pairs = [], [], []
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        w = profile(args.scenario, seed, "stations", args.empty_rule, args.window)
        c = profile(args.scenario, seed, "capacitors", args.empty_rule, args.window)
        half = len(w) // 2
        band = steady_band(w[half:] + c[half:])
        pairs.append((settling_time(w, args.window, band, args.hold),
                      settling_time(c, args.window, band, args.hold)))
        warm.append(w)
        cold.append(c)
        print(f"seed {seed:>2}: band {band[0]:5.1f}..{band[1]:5.1f}  "
              f"settled stations {pairs[-1][0]:6.0f} s  capacitors {pairs[-1][1]:6.0f} s")

    for name, runs in (("stations", warm), ("capacitors", cold)):
        mean_prof = [statistics.fmean(r[k] for r in runs) for k in range(min(args.show, len(runs[0])))]
        print(f"{name:>10}: " + " ".join(f"{q:4.1f}" for q in mean_prof))
    print(f"mean time to band: stations {statistics.fmean(p[0] for p in pairs):.0f} s, "
          f"capacitors {statistics.fmean(p[1] for p in pairs):.0f} s; "
          f"stations no later in {sum(a <= b for a, b in pairs)}/{len(pairs)} pairs")


if __name__ == "__main__":
    main()
