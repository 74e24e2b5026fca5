"""Benchmark harness: runs planner variants over seeds and sweeps, writes CSV metrics.

Rows are written in (sweep value, seed) order whatever the number of concurrent
jobs. Each sweep value ends with an aggregate row whose metric cells read
``mean±std`` (sample standard deviation, 0 for a single seed).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .maze import read_maze
from .planner import VARIANTS, PlannerConfig, config_from_mapping, run_variant, variant_config
from .sampler import SurrogateDenoiser, derive_seed, warm_up
from .trajectory import PlanningProblem, default_horizon

CSV_VERSION = 1
HEADER_COMMENT = f"# mctd-bench csv v{CSV_VERSION}"
COLUMNS = (
    "kind",
    "planner",
    "maze",
    "sweep",
    "value",
    "seed",
    "success",
    "wall_clock",
    "iterations_used",
    "expansions",
    "denoise_iterations",
    "duplicate_selection_fraction",
    "reward",
    "planning_calls",
    "message",
)
METRICS = COLUMNS[6:14]
TIMING_COLUMNS = ("wall_clock",)

# sweep name -> PlannerConfig field
SWEEP_FIELDS = {
    "K": "parallelism",
    "w": "ras_weight",
    "H": "coarsen_interval",
    "m": "leaf_parallel",
    "redundancy": "redundancy_aware",
}
_REDUNDANCY = {"aware": True, "on": True, "1": True, "true": True, "unaware": False, "off": False, "0": False, "false": False}


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class BenchSpec:
    maze_path: str
    planner: str = "fast"
    seeds: int = 1
    overrides: dict = field(default_factory=dict)
    sweep: tuple[str, tuple] | None = None
    base_seed: int = 0
    horizon: int | None = None
    timing: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.planner not in VARIANTS:
            raise ValueError(f"unknown planner {self.planner!r}; expected one of {', '.join(VARIANTS)}")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.sweep is not None:
            name, values = self.sweep
            if name not in SWEEP_FIELDS:
                raise ValueError(f"sweep parameter must be one of {', '.join(SWEEP_FIELDS)}, got {name!r}")
            if not values:
                raise ValueError("sweep needs at least one value")

    def config_for(self, value=None) -> PlannerConfig:
        cfg = config_from_mapping(dict(self.overrides), variant_config(self.planner))
        if self.sweep is not None:
            name = self.sweep[0]
            cfg = cfg.replace(**{SWEEP_FIELDS[name]: coerce_sweep_value(name, value)})
        return cfg


def coerce_sweep_value(name: str, value):
    if name == "redundancy":
        key = str(value).strip().lower()
        if key not in _REDUNDANCY:
            raise ValueError(f"redundancy must be aware or unaware, got {value!r}")
        return _REDUNDANCY[key]
    if name in ("K", "H", "m"):
        return int(value)
    return float(value)


def parse_sweep(text: str) -> tuple[str, tuple[str, ...]]:
    """``"K=1,8,64"`` -> ``("K", ("1", "8", "64"))``."""
    name, sep, values = text.partition("=")
    name = name.strip()
    if not sep or name not in SWEEP_FIELDS:
        raise ValueError(f"expected <param>=<v1,v2,...> with param in {', '.join(SWEEP_FIELDS)}, got {text!r}")
    vals = tuple(v.strip() for v in values.split(",") if v.strip())
    if not vals:
        raise ValueError("sweep needs at least one value")
    for v in vals:
        coerce_sweep_value(name, v)
    return name, vals


def load_problem(maze_path: str, horizon: int | None = None) -> PlanningProblem:
    maze = read_maze(maze_path)
    return PlanningProblem(maze, horizon or default_horizon(maze))


def run_one(planner: str, problem: PlanningProblem, config: PlannerConfig):
    warm_up(problem, config.budget, sorted({1, config.coarsen_interval}))
    with SurrogateDenoiser(problem, config.budget, workers=config.worker_count) as sampler:
        return run_variant(planner, problem, sampler, config)


def _task(args) -> dict:
    spec, value, index = args
    try:
        problem = load_problem(spec.maze_path, spec.horizon)
        cfg = spec.config_for(value).replace(seed=derive_seed(spec.base_seed, index))
        res = run_one(spec.planner, problem, cfg)
        metrics = {
            "success": bool(res.success),
            "wall_clock": res.wall_clock if spec.timing else 0.0,
            "iterations_used": res.iterations_used,
            "expansions": res.expansions,
            "denoise_iterations": res.denoise_iterations,
            "duplicate_selection_fraction": res.duplicate_selection_fraction,
            "reward": res.reward,
            "planning_calls": res.planning_calls,
            "message": res.message,
        }
    except Exception as exc:  # a failing seed is recorded, the sweep goes on
        metrics = {k: 0 for k in METRICS} | {"success": False, "wall_clock": 0.0, "message": f"error: {exc}"}
    return metrics


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def aggregate(rows: list[dict]) -> dict:
    """Mean and sample std per metric over run rows."""
    out = {}
    for k in METRICS:
        xs = [float(r[k]) for r in rows]
        mean = math.fsum(xs) / len(xs)
        std = statistics.stdev(xs) if len(xs) > 1 else 0.0
        out[k] = (mean, std)
    return out


def run_bench(spec: BenchSpec) -> list[dict]:
    """All rows (run rows then one aggregate row per sweep value), as dicts of strings."""
    maze_name = load_problem(spec.maze_path, spec.horizon).maze.name  # fails fast on a bad maze
    spec.config_for(spec.sweep[1][0] if spec.sweep else None)
    name = spec.sweep[0] if spec.sweep else ""
    values = spec.sweep[1] if spec.sweep else (None,)
    tasks = [(spec, v, i) for v in values for i in range(spec.seeds)]
    if spec.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(spec.jobs) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]

    rows = []
    for vi, v in enumerate(values):
        chunk = results[vi * spec.seeds : (vi + 1) * spec.seeds]
        base = {"planner": spec.planner, "maze": maze_name, "sweep": name, "value": "" if v is None else str(v)}
        runs = []
        for i, m in enumerate(chunk):
            row = {"kind": "run", **base, "seed": str(i)} | {k: _fmt(m[k]) for k in METRICS} | {"message": m["message"]}
            runs.append(row)
        agg = aggregate(runs)
        rows += runs
        rows.append(
            {"kind": "aggregate", **base, "seed": str(len(runs))}
            | {k: f"{agg[k][0]!r}±{agg[k][1]!r}" for k in METRICS}
            | {"message": ""}
        )
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(HEADER_COMMENT + "\n")
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def read_rows(text: str) -> list[dict]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# mctd-bench csv"):
        raise SchemaError("missing mctd-bench header comment")
    if lines[0].strip() != HEADER_COMMENT:
        raise SchemaError(f"unsupported CSV version: {lines[0].strip()!r}")
    reader = csv.DictReader(io.StringIO("\n".join(lines[1:]) + "\n"))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        missing = [c for c in COLUMNS if c not in (reader.fieldnames or ())]
        raise SchemaError("column mismatch" + (f"; missing {', '.join(missing)}" if missing else ""))
    return list(reader)


def parse_aggregate(cell: str) -> tuple[float, float]:
    mean, _, std = cell.partition("±")
    return float(mean), float(std)


@dataclass
class CompareRow:
    sweep: str
    value: str
    baseline_wall_clock: float
    candidate_wall_clock: float
    speedup: float
    baseline_success: float
    candidate_success: float
    success_delta: float  # percentage points


def _group_means(rows: list[dict]) -> dict[tuple[str, str], dict[str, float]]:
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        if r["kind"] == "run":
            groups.setdefault((r["sweep"], r["value"]), []).append(r)
    return {key: {k: m for k, (m, _) in aggregate(rs).items()} for key, rs in groups.items()}


def compare_report(baseline_csv: str, candidate_csv: str) -> list[CompareRow]:
    """Per sweep value: speedup of the candidate's mean wall-clock and success delta."""
    base = _group_means(read_rows(baseline_csv))
    cand = _group_means(read_rows(candidate_csv))
    out = []
    for key in base:
        if key not in cand:
            continue
        b, c = base[key], cand[key]
        bw, cw = b["wall_clock"], c["wall_clock"]
        speedup = 1.0 if bw == cw else (bw / cw if cw > 0 else math.inf)
        out.append(
            CompareRow(
                key[0],
                key[1],
                bw,
                cw,
                speedup,
                100.0 * b["success"],
                100.0 * c["success"],
                100.0 * (c["success"] - b["success"]),
            )
        )
    if not out:
        raise SchemaError("the two files share no sweep values")
    return out


def report_csv(rows: list[CompareRow]) -> str:
    buf = io.StringIO()
    names = [f.name for f in dataclasses.fields(CompareRow)]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        w.writerow([_fmt(getattr(r, n)) for n in names])
    return buf.getvalue()


def report_json(rows: list[CompareRow]) -> str:
    return json.dumps([dataclasses.asdict(r) for r in rows], indent=2)


def report_text(rows: list[CompareRow]) -> str:
    head = f"{'sweep':<10} {'value':>8} {'base s':>10} {'cand s':>10} {'speedup':>8} {'base %':>7} {'cand %':>7} {'delta':>7}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r.sweep or '-':<10} {r.value or '-':>8} {r.baseline_wall_clock:>10.4f} {r.candidate_wall_clock:>10.4f} "
            f"{r.speedup:>8.2f} {r.baseline_success:>7.1f} {r.candidate_success:>7.1f} {r.success_delta:>+7.1f}"
        )
    return "\n".join(lines) + "\n"
