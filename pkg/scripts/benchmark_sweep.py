#!/usr/bin/env python3
"""Reproduce the partitioned-vs-flat benchmark sweep at desk scale.

Runs both planners over synthetic clustered instances and prints the
aggregate table (mean distance and wall clock per size and method).
The full replayable record lands next to the report as JSON.

Example:
    python scripts/benchmark_sweep.py --sizes 1000 --trials 10 --out bench.txt
"""
import argparse
import json
import sys

from cargoplan.cli import format_report, run_bench
from cargoplan.vrp import StopRule


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000", help="comma-separated instance sizes")
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--clusters", type=int, default=10)
    ap.add_argument("--k-regions", type=int, default=None,
                    help="regions for the partitioned method (default: heuristic)")
    ap.add_argument("--stop-iters", type=int, default=150,
                    help="no-improvement window in iterations")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None, help="write report here (default stdout)")
    args = ap.parse_args(argv)

    report = run_bench(sizes=[int(s) for s in args.sizes.split(",")],
                       trials=args.trials, clusters=args.clusters,
                       k_regions=args.k_regions, knn=10, vehicles_per=50,
                       stop=StopRule("iterations", args.stop_iters),
                       seed=args.seed, jobs=args.jobs)
    table = format_report(report, "table")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table)
        with open(args.out + ".json", "w") as fh:
            fh.write(json.dumps(report, indent=2, sort_keys=True))
    print(table, end="")
    return 1 if report["failures"] else 0


if __name__ == "__main__":
    sys.exit(main())
