"""Command-line surface: instance generation, planning, benchmarking, events."""
from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import pipeline as pl
from .netmodel import parse_network
from .synthgen import GenConfig, build_instance
from .netmodel import serialize_network
from .vrp import StopRule


def _stop_rule(args) -> StopRule:
    if getattr(args, "stop_iters", None) is not None:
        return StopRule("iterations", args.stop_iters)
    return StopRule("seconds", args.stop_seconds)


def _params(args, k_regions=None) -> pl.PipelineParams:
    stop = _stop_rule(args)
    # iteration-mode runs stay deterministic end to end, events included
    event_stop = stop if stop.mode == "iterations" else StopRule("seconds", 20.0)
    return pl.PipelineParams(
        knn=args.knn,
        k_regions=k_regions if k_regions is not None else args.k_regions,
        root_seed=args.seed,
        stop=stop,
        event_stop=event_stop,
        vehicles_per=args.vehicles_per,
    )


def _load_network(path: str):
    try:
        with open(path, "rb") as fh:
            return parse_network(fh.read())
    except OSError as exc:
        raise SystemExit(f"error: cannot read network file {path}: {exc.strerror}")


def _add_common_plan_flags(p: argparse.ArgumentParser):
    p.add_argument("--knn", type=int, default=10, help="neighbors per abstract-graph row")
    p.add_argument("--vehicles-per", type=int, default=50,
                   help="customers per vehicle when sizing fleets")
    stop = p.add_mutually_exclusive_group()
    stop.add_argument("--stop-seconds", type=float, default=10.0,
                      help="no-improvement window, wall-clock seconds")
    stop.add_argument("--stop-iters", type=int, default=None,
                      help="no-improvement window, iterations (deterministic)")
    p.add_argument("--seed", type=int, default=0, help="root seed")
    p.add_argument("--out", required=True, help="output path")


def cmd_generate(args) -> int:
    cfg = GenConfig(n_locations=args.n, n_clusters=args.clusters,
                    cluster_sigma_km=args.sigma, bbox_km=args.bbox,
                    site_fraction=args.site_fraction, seed=args.seed)
    net = build_instance(cfg)
    with open(args.out, "w") as fh:
        fh.write(f"# synthetic instance n={args.n} clusters={args.clusters} "
                 f"sigma={args.sigma} bbox={args.bbox} "
                 f"site_fraction={args.site_fraction} seed={args.seed}\n")
        fh.write(serialize_network(net))
    return 0


def _run_plan(args, k_regions=None) -> int:
    net = _load_network(args.network)
    try:
        plan = pl.run_pipeline(net, _params(args, k_regions=k_regions))
    except pl.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    with open(args.out, "w") as fh:
        fh.write(pl.plan_to_json(plan))
    if getattr(args, "geojson", None):
        with open(args.geojson, "w") as fh:
            fh.write(pl.plan_to_geojson(plan))
    return 0


def cmd_pipeline(args) -> int:
    return _run_plan(args)


def cmd_flat(args) -> int:
    return _run_plan(args, k_regions=1)


def cmd_event(args) -> int:
    net = _load_network(args.network)
    try:
        plan = pl.run_pipeline(net, _params(args))
        with open(args.events) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                plan = pl.handle_event(plan, pl.AdHocEvent.from_record(line))
    except pl.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot read events file {args.events}: {exc.strerror}",
              file=sys.stderr)
        return 1
    with open(args.out, "w") as fh:
        fh.write(pl.plan_to_json(plan))
    return 0


def _bench_trial(job: dict) -> list[dict]:
    """One (size, trial): generate the instance, run both methods."""
    cfg = GenConfig(n_locations=job["size"], n_clusters=job["clusters"],
                    seed=job["instance_seed"])
    net = build_instance(cfg)
    stop = StopRule(job["stop_mode"], job["stop_window"])
    rows = []
    for method in ("partitioned", "flat"):
        params = pl.PipelineParams(
            knn=job["knn"],
            k_regions=1 if method == "flat" else job["k_regions"],
            root_seed=job["solver_seed"], stop=stop,
            vehicles_per=job["vehicles_per"])
        t0 = time.monotonic()
        plan = pl.run_pipeline(net, params)
        wall = time.monotonic() - t0
        rows.append({
            "size": job["size"], "trial": job["trial"], "method": method,
            "distance_km": plan.totals["distance_km"],
            "time_h": plan.totals["time_h"],
            "wall_s": wall,
            "instance_seed": job["instance_seed"],
            "solver_seed": job["solver_seed"],
        })
    return rows


def run_bench(sizes: list[int], trials: int, clusters: int, k_regions: int | None,
              knn: int, vehicles_per: int, stop: StopRule, seed: int,
              jobs: int = 1) -> dict:
    """Benchmark sweep comparing partitioned and flat planning.

    Every cell derives its seeds from the root seed, so rows are replayable.
    """
    jobs_list = []
    for size in sizes:
        for trial in range(trials):
            jobs_list.append({
                "size": size, "trial": trial, "clusters": clusters,
                "k_regions": k_regions, "knn": knn, "vehicles_per": vehicles_per,
                "stop_mode": stop.mode, "stop_window": stop.window,
                "instance_seed": pl.derive_seed(seed, 10, size, trial),
                "solver_seed": pl.derive_seed(seed, 11, size, trial),
            })
    rows: list[dict] = []
    failures: list[dict] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_bench_trial, jobs_list))
        for job, res in zip(jobs_list, results):
            rows.extend(res)
    else:
        for job in jobs_list:
            try:
                rows.extend(_bench_trial(job))
            except Exception as exc:
                failures.append({"size": job["size"], "trial": job["trial"],
                                 "error": str(exc)})
                print(f"warning: trial {job['trial']} at size {job['size']} "
                      f"failed: {exc}", file=sys.stderr)

    aggregates = []
    for size in sizes:
        for method in ("partitioned", "flat"):
            sel = [r for r in rows if r["size"] == size and r["method"] == method]
            if not sel:
                continue
            dist = [r["distance_km"] for r in sel]
            wall = [r["wall_s"] for r in sel]
            aggregates.append({
                "size": size, "method": method, "trials": len(sel),
                "mean_distance_km": statistics.fmean(dist),
                "std_distance_km": statistics.pstdev(dist) if len(dist) > 1 else 0.0,
                "mean_wall_s": statistics.fmean(wall),
                "std_wall_s": statistics.pstdev(wall) if len(wall) > 1 else 0.0,
                "incomplete": len(sel) < trials,
            })
    return {
        "params": {"sizes": sizes, "trials": trials, "clusters": clusters,
                   "k_regions": k_regions, "knn": knn,
                   "vehicles_per": vehicles_per,
                   "stop": [stop.mode, stop.window], "seed": seed},
        "rows": rows,
        "aggregates": aggregates,
        "failures": failures,
    }


def format_report(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True)
    if fmt == "csv":
        buf = io.StringIO()
        fields = ["size", "trial", "method", "distance_km", "time_h", "wall_s",
                  "instance_seed", "solver_seed"]
        w = csv.DictWriter(buf, fieldnames=fields)
        w.writeheader()
        for row in report["rows"]:
            w.writerow(row)
        return buf.getvalue()
    # plain text table mirroring the benchmark's aggregate columns
    lines = [f"{'size':>7} {'method':>12} {'trials':>7} {'mean km':>12} "
             f"{'std km':>10} {'mean s':>10} {'std s':>10}"]
    for a in report["aggregates"]:
        flag = " (incomplete)" if a["incomplete"] else ""
        lines.append(f"{a['size']:>7} {a['method']:>12} {a['trials']:>7} "
                     f"{a['mean_distance_km']:>12.1f} {a['std_distance_km']:>10.1f} "
                     f"{a['mean_wall_s']:>10.2f} {a['std_wall_s']:>10.2f}{flag}")
    return "\n".join(lines) + "\n"


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    report = run_bench(sizes=sizes, trials=args.trials, clusters=args.clusters,
                       k_regions=args.k_regions, knn=args.knn,
                       vehicles_per=args.vehicles_per, stop=_stop_rule(args),
                       seed=args.seed, jobs=args.jobs)
    out = format_report(report, args.format)
    with open(args.out, "w") as fh:
        fh.write(out)
    if args.format != "json":  # keep the replayable record alongside
        with open(args.out + ".json", "w") as fh:
            fh.write(json.dumps(report, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cargoplan")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--clusters", type=int, required=True)
    g.add_argument("--sigma", type=float, default=3.0)
    g.add_argument("--bbox", type=float, default=100.0)
    g.add_argument("--site-fraction", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    for name, func, with_k in (("pipeline", cmd_pipeline, True),
                               ("flat", cmd_flat, False)):
        p = sub.add_parser(name, help=f"run the {name} planner")
        p.add_argument("network", help="network file")
        if with_k:
            p.add_argument("--k-regions", type=int, default=None)
        _add_common_plan_flags(p)
        p.add_argument("--geojson", default=None, help="also write GeoJSON here")
        p.set_defaults(func=func)

    e = sub.add_parser("event", help="run the pipeline then replay events")
    e.add_argument("network")
    e.add_argument("--events", required=True, help="JSON-lines event file")
    e.add_argument("--k-regions", type=int, default=None)
    _add_common_plan_flags(e)
    e.set_defaults(func=cmd_event)

    b = sub.add_parser("bench", help="partitioned-vs-flat benchmark sweep")
    b.add_argument("--sizes", required=True, help="comma-separated instance sizes")
    b.add_argument("--trials", type=int, default=10)
    b.add_argument("--clusters", type=int, default=10)
    b.add_argument("--k-regions", type=int, default=None)
    b.add_argument("--knn", type=int, default=10)
    b.add_argument("--vehicles-per", type=int, default=50)
    stop = b.add_mutually_exclusive_group()
    stop.add_argument("--stop-seconds", type=float, default=10.0)
    stop.add_argument("--stop-iters", type=int, default=None)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", required=True)
    b.add_argument("--format", choices=("table", "json", "csv"), default="table")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
