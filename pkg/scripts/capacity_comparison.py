"""Vehicles per hour past the ring's probe node under both keeping-up rules.

    python3 scripts/capacity_comparison.py --seeds 10
"""

import argparse
import math
import statistics
from pathlib import Path

from podway.scenario import load_scenario
from podway.simulation import run_replication

SCENARIO = Path(__file__).resolve().parents[1] / "scenarios" / "ring_capacity.json"


def sign_test(wins: int, losses: int) -> float:
    """One-sided P(at least `wins` successes) under a fair coin."""
    n = wins + losses
    if n == 0:
        return 1.0
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2 ** n


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default=str(SCENARIO))
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--horizon", type=float)
    args = ap.parse_args()

    over = {"run.horizon": args.horizon} if args.horizon else {}
    print(f"{'seed':>4} {'optimal':>9} {'careful':>9} {'gain':>7}")
    pairs = []
    for seed in range(1, args.seeds + 1):
        vph = {}
        for rule in ("optimal", "careful"):
            sc = load_scenario(args.scenario, {**over, "motion.rule": rule, "run.seed": seed})
            vph[rule] = run_replication(sc).metrics.probe_vph
        pairs.append((vph["optimal"], vph["careful"]))
        print(f"{seed:>4} {vph['optimal']:>9.0f} {vph['careful']:>9.0f} {vph['optimal'] / vph['careful'] - 1:>+7.1%}")
    wins = sum(o > c for o, c in pairs)
    losses = sum(o < c for o, c in pairs)
    print(f"optimal ahead in {wins}, behind in {losses}; one-sided sign test p = {sign_test(wins, losses):.4f}")
    print(f"mean vph: optimal {statistics.fmean(o for o, _ in pairs):.0f}, "
          f"careful {statistics.fmean(c for _, c in pairs):.0f}")


if __name__ == "__main__":
    main()
