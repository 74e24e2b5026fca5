"""``mctd-bench``: plan, benchmark, ablate and compare from the command line."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .planner import VARIANTS, config_values
from .sampler import derive_seed
from .trajectory import write_csv


def _overrides(args) -> dict:
    values = {}
    if getattr(args, "config", None):
        values.update(config_values(Path(args.config).read_text(encoding="utf-8")))
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        values[key.strip()] = value.strip()
    if getattr(args, "workers", None) is not None:
        values["worker_count"] = str(args.workers)
    if getattr(args, "iterations", None) is not None:
        values["max_iterations"] = str(args.iterations)
    return values


def _spec(args, planner: str, sweep=None) -> bench.BenchSpec:
    return bench.BenchSpec(
        maze_path=args.maze,
        planner=planner,
        seeds=args.seeds,
        overrides=_overrides(args),
        sweep=sweep,
        base_seed=args.base_seed,
        horizon=args.horizon,
        timing=not args.no_timing,
        jobs=args.jobs,
    )


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _summary(rows: list[dict]) -> str:
    lines = []
    for r in rows:
        if r["kind"] != "aggregate":
            continue
        label = r["planner"] + (f" {r['sweep']}={r['value']}" if r["sweep"] else "")
        s, _ = bench.parse_aggregate(r["success"])
        t, dt = bench.parse_aggregate(r["wall_clock"])
        lines.append(f"{label}: success {100 * s:.1f}% over {r['seed']} seeds, wall-clock {t:.4f}±{dt:.4f} s")
    return "\n".join(lines) + "\n"


def cmd_plan(args):
    spec = _spec(args, args.planner)
    rows = bench.run_bench(spec)
    _emit(bench.rows_to_csv(rows), args.out)
    if args.out:
        sys.stdout.write(_summary(rows))
    if args.trajectory_out:
        problem = bench.load_problem(args.maze, args.horizon)
        cfg = spec.config_for().replace(seed=derive_seed(args.base_seed, 0))
        res = bench.run_one(args.planner, problem, cfg)
        Path(args.trajectory_out).write_text(write_csv(res.trajectory), encoding="utf-8")
    return 0


def cmd_bench(args):
    planners = [p.strip() for p in args.planners.split(",") if p.strip()]
    rows = []
    for p in planners:
        rows += bench.run_bench(_spec(args, p))
    _emit(bench.rows_to_csv(rows), args.out)
    if args.out:
        sys.stdout.write(_summary(rows))
    return 0


def cmd_ablate(args):
    rows = bench.run_bench(_spec(args, args.planner, bench.parse_sweep(args.sweep)))
    _emit(bench.rows_to_csv(rows), args.out)
    if args.out:
        sys.stdout.write(_summary(rows))
    return 0


def cmd_compare(args):
    rows = bench.compare_report(
        Path(args.baseline).read_text(encoding="utf-8"), Path(args.candidate).read_text(encoding="utf-8")
    )
    text = {"text": bench.report_text, "csv": bench.report_csv, "json": bench.report_json}[args.format](rows)
    _emit(text, args.out)
    return 0


def cmd_dump_tree(args):
    if args.planner == "fast-replan":
        raise ValueError("fast-replan builds one tree per planning call; dump-tree needs a single-call planner")
    spec = bench.BenchSpec(args.maze, args.planner, 1, _overrides(args), horizon=args.horizon)
    cfg = spec.config_for().replace(seed=args.seed)
    res = bench.run_one(args.planner, bench.load_problem(args.maze, args.horizon), cfg)
    _emit(res.tree.dump(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mctd-bench", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seeds=True):
        p.add_argument("--maze", required=True, help="maze file or fixture name (medium, large, giant)")
        p.add_argument("--horizon", type=int, default=None, help="planning horizon (default: by maze size)")
        p.add_argument("--config", help="file of 'key = value' planner settings")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one planner setting")
        p.add_argument("--workers", type=int, default=None, help="sampler worker threads per run")
        p.add_argument("--iterations", type=int, default=None, help="rollout budget")
        p.add_argument("--out", help="output path (default: stdout)")
        if seeds:
            p.add_argument("--seeds", type=int, default=1)
            p.add_argument("--base-seed", type=int, default=0)
            p.add_argument("--jobs", type=int, default=1, help="seeds run concurrently in this many processes")
            p.add_argument("--no-timing", action="store_true", help="write 0 for wall-clock (byte-stable output)")

    p = sub.add_parser("plan", help="run one planner over seeds")
    common(p)
    p.add_argument("--planner", choices=VARIANTS, default="fast")
    p.add_argument("--trajectory-out", help="also write the seed-0 plan as t,x,y CSV")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="run several planners over seeds")
    common(p)
    p.add_argument("--planners", default=",".join(VARIANTS))
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="sweep one parameter")
    common(p)
    p.add_argument("--planner", choices=VARIANTS, default="fast")
    p.add_argument("--sweep", required=True, help="e.g. K=1,8,64,200 (K, w, H, m or redundancy)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("compare", help="speedup and success deltas between two CSVs")
    p.add_argument("baseline")
    p.add_argument("candidate")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dump-tree", help="print the search tree of one run")
    common(p, seeds=False)
    p.add_argument("--planner", choices=[v for v in VARIANTS if v != "fast-replan"], default="fast")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_dump_tree)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"mctd-bench: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
