"""Acceptance criteria C1-C10, one test each.

Every test records a ``C<n> PASS|FAIL`` line with the measured numbers. The
lines are echoed at the end of the pytest run (see conftest.py) and printed
directly when this file is run as a script.
"""

import math
import random
import time

import numpy as np
import pytest

from conftest import ROOM
from test_planner import SEALED
from mctd.cost import CostInputs, full_expansion_count, predicted_cost_mctd
from mctd.maze import load_fixture, load_maze
from mctd.planner import PlannerConfig, PlanResult, fast_mctd_plan, mctd_plan, replan_loop, run_variant, variant_config
from mctd.sampler import CompletionRequest, SamplerRequest, SurrogateDenoiser, warm_up
from mctd.trajectory import PlanningProblem, coarsen_trajectory, default_horizon, lift_plan, trajectory_reward
from mctd.tree import Tree

RESULTS: list[str] = []
GIANT_SEEDS = 20


def report(tag, ok, detail, budget_s=None, elapsed=None):
    line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
    if elapsed is not None:
        line += f" [{elapsed:.1f}s of {budget_s}s]"
    RESULTS.append(line)
    print(line)
    assert ok, line


def problem_for(name):
    m = load_fixture(name)
    return PlanningProblem(m, default_horizon(m))


def run_seeds(name, problem, cfg, seeds, workers=1):
    warm_up(problem, cfg.budget, sorted({1, cfg.coarsen_interval}))
    with SurrogateDenoiser(problem, cfg.budget, workers=workers) as s:
        return [run_variant(name, problem, s, cfg.replace(seed=i)) for i in range(seeds)]


def mean(xs):
    return math.fsum(xs) / len(xs)


# C1 -------------------------------------------------------------------------

def formula_argmax(parent_n, parent_nhat, children, beta, w):
    best, best_s = None, -math.inf
    for a in sorted(children):
        v, n, nhat = children[a]
        d = n + w * nhat
        s = math.inf if d <= 0 else v + beta * math.sqrt(math.log(max(parent_n + w * parent_nhat, 1.0)) / d)
        if s > best_s:
            best, best_s = a, s
    return best


def test_c1_selection_oracle():
    t0 = time.perf_counter()
    rng = random.Random(2024)
    G = tuple(range(6))
    mismatches = w0 = 0
    for i in range(10_000):
        k = rng.randint(1, len(G))
        children = {
            a: (rng.choice([0.0, rng.random(), 1.0]), rng.choice([0, 1, 2, 5, 13, 80]), rng.randint(0, 6))
            for a in rng.sample(G, k)
        }
        total = sum(c[1] for c in children.values()) + rng.randint(0, 4)
        nhat = rng.randint(0, 50)
        beta = rng.choice([0.0, 0.5, 1.0, 2.0])
        w = 0.0 if i % 4 == 0 else rng.choice([0.1, 1.0, 5.0, rng.uniform(0, 10)])
        w0 += w == 0.0
        t = Tree([(0.0, 0.0)], G)
        t[t.root].visits, t[t.root].temp_visits = total, nhat
        for a, (v, n, h) in children.items():
            c = t[t.expand(t.root, a, [(0.0, 0.0)])]
            c.value, c.visits, c.temp_visits = v, n, h
        got = t[t.best_child(t.root, beta, w)].action
        mismatches += got != formula_argmax(total, nhat, children, beta, w)
        if w == 0.0:
            # w = 0: the within-batch counts must not matter at all
            plain = {a: (v, n, 0) for a, (v, n, _) in children.items()}
            mismatches += got != formula_argmax(total, 0, plain, beta, 0.0)
    el = time.perf_counter() - t0
    report("C1", mismatches == 0 and el < 5, f"10000 stat sets ({w0} with w=0), {mismatches} mismatches", 5, el)


# C2 -------------------------------------------------------------------------

def test_c2_sequential_trace_equivalence():
    t0 = time.perf_counter()
    p = problem_for("medium")
    differ = []
    for seed in range(10):
        cfg = PlannerConfig(parallelism=1, ras_weight=0.0, coarsen_interval=1, max_iterations=100,
                            stop_on_goal=False, seed=seed)
        a = mctd_plan(p, SurrogateDenoiser(p), cfg)
        b = fast_mctd_plan(p, SurrogateDenoiser(p), cfg)
        if a.tree.dump() != b.tree.dump() or a.iterations_used != 100:
            differ.append(seed)
    el = time.perf_counter() - t0
    report("C2", not differ and el < 30, f"10 seeds x 100 iterations on 15x15, dumps differ for {differ}", 30, el)


# C3 -------------------------------------------------------------------------

def frozen_tree(seed):
    """Three-level fully expanded tree with fixed random statistics."""
    rng = random.Random(seed)
    t = Tree([(0.0, 0.0)], (0.0, 0.1, 0.5, 1.0, 2.0))
    frontier = [t.root]
    for _ in range(3):
        nxt = []
        for n in frontier:
            for a in range(5):
                nxt.append(t.expand(n, a, [(0.0, 0.0)]))
        frontier = nxt
    for leaf in frontier:
        for _ in range(rng.randint(1, 4)):
            t.backpropagate_batch([(leaf, rng.random() * 0.3)])
    return t


def test_c3_ras_reduces_redundancy():
    t0 = time.perf_counter()
    distinct = {}
    for w in (0.0, 1.0):
        counts = []
        for seed in range(5):
            t = frozen_tree(seed)
            counts.append(len({t.select_leaf(1.0, w)[-1] for _ in range(32)}))
        distinct[w] = counts
    frozen_ok = all(b > a for a, b in zip(distinct[0.0], distinct[1.0]))

    p = problem_for("large")
    ws = (0.0, 0.1, 1.0, 5.0)
    dup = []
    for w in ws:
        cfg = variant_config("fast").replace(parallelism=32, ras_weight=w, stop_on_goal=False)
        dup.append(mean([r.duplicate_selection_fraction for r in run_seeds("fast", p, cfg, 20)]))
    mono = all(b <= a for a, b in zip(dup, dup[1:]))
    el = time.perf_counter() - t0
    detail = (f"frozen K=32 distinct leaves w=0 {distinct[0.0]} vs w=1 {distinct[1.0]}; "
              f"31x31 dup fraction over w={ws}: {[round(d, 4) for d in dup]}")
    report("C3", frozen_ok and mono and el < 120, detail, 120, el)


# C4 -------------------------------------------------------------------------

def test_c4_forced_failure_counts():
    t0 = time.perf_counter()
    bad = []
    for n in (2, 3):
        for d in (2, 3, 4):
            p = PlanningProblem(load_maze(SEALED), 2 * d)
            full = full_expansion_count(n, d)
            cfg = PlannerConfig(parallelism=1, coarsen_interval=1, subplan_length=2, guidance_set=tuple(range(n)),
                                max_iterations=3 * full + 10, seed=d)
            res = mctd_plan(p, SurrogateDenoiser(p), cfg)
            leaves = sum(node.depth == d for node in res.tree.nodes)
            if (res.success or res.expansions != sum(n**i for i in range(1, d + 1))
                    or leaves != predicted_cost_mctd(CostInputs(n, d, c_sub=1.0))):
                bad.append((n, d, res.expansions, leaves))
    el = time.perf_counter() - t0
    report("C4", not bad and el < 10, f"6 (n_child, depth) cases, mismatches {bad}", 10, el)


# C5 -------------------------------------------------------------------------

def test_c5_batch_equals_single():
    t0 = time.perf_counter()
    base = problem_for("large")
    rng = np.random.default_rng(5)
    problems = {H: base.coarse(H) for H in (1, 5)}
    singles = {H: SurrogateDenoiser(p) for H, p in problems.items()}
    pools = {(H, k): SurrogateDenoiser(p, workers=k, min_chunk=1) for H, p in problems.items() for k in (1, 4, 8)}
    cells = base.maze.free_cells
    mismatched = requests = 0
    for b in range(1000):
        H = (1, 5)[b % 2]
        p = problems[H]
        exp, comp = [], []
        for _ in range(int(rng.integers(1, 9))):
            prefix = np.vstack([p.start, cells[rng.integers(len(cells), size=int(rng.integers(0, 3)))]])
            g = float(rng.choice([0.0, 0.1, 0.5, 1.0, 2.0]))
            exp.append(SamplerRequest(prefix, g, int(rng.integers(1, 26)), int(rng.integers(2**63))))
            sched = tuple(float(x) for x in rng.choice([0.0, 0.5, 2.0], size=int(rng.integers(1, 4))))
            comp.append(CompletionRequest(prefix, sched, int(rng.integers(0, 4)), int(rng.integers(2**63)),
                                          int(rng.integers(1, 26)), int(rng.integers(1, 26))))
        want_e = [singles[H].expand_subplan(r).states for r in exp]
        want_c = [singles[H].complete_trajectory(r) for r in comp]
        requests += len(exp) + len(comp)
        for k in (1, 4, 8):
            s = pools[(H, k)]
            got_e = [x.states for x in s.expand_batch(exp)]
            got_c = s.complete_batch(comp)
            mismatched += sum(not np.array_equal(a, b_) for a, b_ in zip(want_e + want_c, got_e + got_c))
    for s in pools.values():
        s.close()
    el = time.perf_counter() - t0
    report("C5", mismatched == 0 and el < 60,
           f"1000 batches ({requests} requests) x workers 1/4/8, {mismatched} non-identical outputs", 60, el)


# C6 -------------------------------------------------------------------------

def test_c6_sparse_cost_reduction():
    t0 = time.perf_counter()
    p = problem_for("giant")
    dense = run_seeds("mctd", p, variant_config("mctd"), GIANT_SEEDS)
    sparse = run_seeds("smctd", p, variant_config("smctd"), GIANT_SEEDS)
    dn_d = sum(r.denoise_iterations for r in dense)
    dn_s = sum(r.denoise_iterations for r in sparse)
    sr_d = 100 * mean([r.success for r in dense])
    sr_s = 100 * mean([r.success for r in sparse])
    ok = dn_s <= dn_d / 2 and sr_s >= sr_d - 10
    el = time.perf_counter() - t0
    detail = (f"63x63, {GIANT_SEEDS} seeds: denoise sparse {dn_s} vs dense {dn_d} (ratio {dn_s / dn_d:.3f}); "
              f"success sparse {sr_s:.0f}% vs dense {sr_d:.0f}%")
    report("C6", ok and el < 300, detail, 300, el)


# C7 -------------------------------------------------------------------------

def test_c7_parallel_speedup():
    t0 = time.perf_counter()
    p = problem_for("giant")
    cfg = variant_config("fast").replace(worker_count=8)
    times = {}
    for K in (1, 64):
        res = run_seeds("fast", p, cfg.replace(parallelism=K), GIANT_SEEDS, workers=8)
        times[K] = mean([r.wall_clock for r in res])
    ratio = times[1] / times[64]
    el = time.perf_counter() - t0
    report("C7", ratio >= 3 and el < 600,
           f"63x63, 8 workers, 500-rollout budget: K=1 {times[1]:.4f}s vs K=64 {times[64]:.4f}s, speedup {ratio:.2f}x",
           600, el)


# C8 -------------------------------------------------------------------------

def test_c8_sweep_shapes():
    t0 = time.perf_counter()
    p = problem_for("giant")
    base = variant_config("fast")
    k_time = {}
    for K in (1, 8, 64, 200):
        k_time[K] = mean([r.wall_clock for r in run_seeds("fast", p, base.replace(parallelism=K), GIANT_SEEDS)])
    h_succ = {}
    for H in (1, 5, 20, 50):
        h_succ[H] = 100 * mean([r.success for r in run_seeds("fast", p, base.replace(coarsen_interval=H), GIANT_SEEDS)])
    k_ok = k_time[1] >= k_time[8] >= k_time[64]
    h_ok = h_succ[50] <= max(h_succ.values()) - 20
    el = time.perf_counter() - t0
    detail = ("63x63 K sweep wall-clock " + ", ".join(f"K={k} {v:.4f}s" for k, v in k_time.items())
              + "; H sweep success " + ", ".join(f"H={h} {v:.0f}%" for h, v in h_succ.items()))
    report("C8", k_ok and h_ok and el < 900, detail, 900, el)


# C9 -------------------------------------------------------------------------

def test_c9_reward_lift_replan_units():
    t0 = time.perf_counter()
    fails = []
    maze = load_maze(ROOM)
    p = PlanningProblem(maze, 40)
    start, goal = p.start, p.goal
    # along the top row, then down the right side: 20 half-cell steps, clear of the wall
    corner = np.array([goal[0], start[1]])
    path = np.vstack([start + (corner - start) * s for s in np.linspace(0, 1, 13)]
                     + [corner + (goal - corner) * s for s in np.linspace(0, 1, 9)[1:]])
    arrive = int(np.argmax(np.linalg.norm(path - goal, axis=1) <= p.goal_tolerance))
    on_goal = PlanningProblem(maze.with_start(goal), 40)
    if trajectory_reward(on_goal, goal[None, :]) != 1.0:
        fails.append("t=0")
    late = np.vstack([np.repeat(start[None, :], 41 - arrive, axis=0), path[1 : arrive + 1]])
    if len(late) - 1 != 40 or trajectory_reward(p, late) != 0.0:
        fails.append("t=H")
    if trajectory_reward(p, np.vstack([start, goal])) != 0.0:
        fails.append("implausible")
    if trajectory_reward(p, path) != (40 - arrive) / 40:
        fails.append(f"t={arrive}")
    # coarsen then lift visits every coarse waypoint exactly
    for H in (1, 2, 4, 5):
        coarse = coarsen_trajectory(path, H)
        lifted = lift_plan(p, coarse, H)
        if any(np.min(np.linalg.norm(lifted - w, axis=1)) != 0.0 for w in coarse) or not np.array_equal(lifted[-1], coarse[-1]):
            fails.append(f"lift H={H}")
    # replan: each call executes at most open_loop_horizon steps, never past the horizon
    calls = []

    def idle(problem, config):
        calls.append(problem.horizon)
        return PlanResult(False, np.repeat(problem.start[None, :], 100, axis=0), (), 3, 1, 0.0, 0.0, 10)

    res = replan_loop(PlanningProblem(maze, 37), idle, PlannerConfig(open_loop_horizon=10))
    if len(res.trajectory) != 41 or res.planning_calls != 4 or calls != [37, 27, 17, 7]:
        fails.append(f"replan {len(res.trajectory)} {res.planning_calls} {calls}")
    el = time.perf_counter() - t0
    report("C9", not fails and el < 5, f"reward/lift/replan unit checks, failing: {fails}", 5, el)


# C10 ------------------------------------------------------------------------

def test_c10_end_to_end():
    t0 = time.perf_counter()
    rates = {}
    for name in ("medium", "giant"):
        res = run_seeds("fast", problem_for(name), variant_config("fast"), 50)
        rates[name] = 100 * mean([r.success for r in res])
    el = time.perf_counter() - t0
    ok = rates["medium"] >= 90 and rates["giant"] >= 70
    report("C10", ok and el < 600,
           f"Fast-MCTD defaults over 50 seeds: 15x15 {rates['medium']:.0f}%, 63x63 {rates['giant']:.0f}%", 600, el)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
