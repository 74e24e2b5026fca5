"""Planner variants: sequential MCTD, parallel (delayed-update) search, sparse
planning on a coarsened problem, and receding-horizon replanning.

Budgets are counted in rollouts (one expansion or re-simulation plus one jumpy
completion), so sequential and parallel planners can be compared at equal work.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .sampler import CompletionRequest, SamplerBudget, SamplerRequest, SubplanSampler, derive_seed
from .trajectory import (
    LiftFailure,
    PlanningProblem,
    goal_index,
    lift_plan,
    trajectory_reward,
    trajectory_rewards,
)
from .tree import Tree

DEFAULT_GUIDANCE_SET = (0.0, 0.1, 0.5, 1.0, 2.0)

# seed stream tags
_EXPAND = 1
_SIMULATE = 2


@dataclass(frozen=True)
class PlannerConfig:
    parallelism: int = 200
    ras_weight: float = 1.0
    exploration: float = 1.0
    coarsen_interval: int = 5
    subplan_length: int = 25
    max_iterations: int = 500
    guidance_set: tuple[float, ...] = DEFAULT_GUIDANCE_SET
    budget: SamplerBudget = field(default_factory=SamplerBudget)
    open_loop_horizon: int = 50
    leaf_parallel: int = 1
    # False lets concurrent selections of one leaf expand the same action again
    redundancy_aware: bool = True
    worker_count: int = 1
    seed: int = 0
    stop_on_goal: bool = True

    def __post_init__(self):
        object.__setattr__(self, "guidance_set", tuple(float(g) for g in self.guidance_set))
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.coarsen_interval < 1:
            raise ValueError("coarsen_interval must be >= 1")
        if self.ras_weight < 0:
            raise ValueError("ras_weight must be >= 0")
        if self.leaf_parallel < 1:
            raise ValueError("leaf_parallel must be >= 1")
        if self.subplan_length < 1:
            raise ValueError("subplan_length must be >= 1")
        if self.open_loop_horizon < 1:
            raise ValueError("open_loop_horizon must be >= 1")
        if not self.guidance_set or any(g < 0 for g in self.guidance_set):
            raise ValueError("guidance set must be non-empty and non-negative")

    def replace(self, **changes) -> "PlannerConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class PlanResult:
    success: bool
    trajectory: np.ndarray
    schedule: tuple[float, ...]
    iterations_used: int
    expansions: int
    duplicate_selection_fraction: float
    wall_clock: float
    denoise_iterations: int
    reward: float = 0.0
    planning_calls: int = 1
    message: str = ""
    tree: Tree | None = field(default=None, repr=False)


def _bind(sampler, problem: PlanningProblem):
    if getattr(sampler, "problem", problem) is not problem and hasattr(sampler, "with_problem"):
        return sampler.with_problem(problem)
    return sampler


def _denoise_count(sampler) -> int:
    metrics = getattr(sampler, "metrics", None)
    return int(getattr(metrics, "denoise_iterations", 0))


class _Search:
    """Tree plus the bookkeeping shared by the sequential and parallel loops."""

    def __init__(self, problem: PlanningProblem, sampler: SubplanSampler, config: PlannerConfig):
        self.problem = problem
        self.sampler = sampler
        self.config = config
        L = config.subplan_length
        self.n_subplans = math.ceil(problem.horizon / L)
        self.last_length = problem.horizon - (self.n_subplans - 1) * L
        self.tree = Tree(problem.start[None, :], config.guidance_set, max_depth=self.n_subplans)
        self.rollouts = 0
        self.expansions = 0
        self.selections = 0
        self.duplicates = 0
        self.best: tuple[float, int, np.ndarray] | None = None  # (reward, node, trajectory)
        self._prefix: dict[int, np.ndarray] = {}

    def prefix(self, node_id: int) -> np.ndarray:
        p = self._prefix.get(node_id)
        if p is None:
            node = self.tree[node_id]
            if node.parent is None:
                p = node.subplan
            else:
                p = np.concatenate([self.prefix(node.parent), node.subplan])
            self._prefix[node_id] = p
        return p

    def block_length(self, depth: int) -> int:
        """Length of the subplan that sits at ``depth`` (root is depth 0)."""
        return self.config.subplan_length if depth < self.n_subplans else self.last_length

    def expansion_request(self, leaf: int, action: int) -> SamplerRequest:
        node = self.tree[leaf]
        return SamplerRequest(
            prefix=self.prefix(leaf),
            guidance=self.tree.guidance_set[action],
            subplan_length=self.block_length(node.depth + 1),
            seed=derive_seed(self.config.seed, _EXPAND, leaf, action),
        )

    def completion_request(self, node_id: int) -> CompletionRequest:
        node = self.tree[node_id]
        G = self.tree.guidance_set
        if node.action is None:
            # the root carries no guidance level; re-simulations cycle through the set
            schedule = (G[node.simulations % len(G)],)
        else:
            schedule = (G[node.action],)
        seed = derive_seed(self.config.seed, _SIMULATE, node_id, node.simulations)
        node.simulations += 1
        remaining = self.n_subplans - node.depth
        return CompletionRequest(
            prefix=self.prefix(node_id),
            schedule=schedule,
            remaining_subplans=remaining,
            seed=seed,
            subplan_length=self.config.subplan_length,
            last_length=self.last_length if remaining else None,
        )

    def record(self, nodes: list[int], trajectories: list[np.ndarray], rewards: list[float]):
        for node_id, traj, r in zip(nodes, trajectories, rewards):
            if r > 0:
                t = goal_index(self.problem, traj)
                traj = traj[: t + 1]
                node = self.tree[node_id]
                if node.rollout is None:
                    node.rollout = traj
                if self.best is None or r > self.best[0]:
                    self.best = (r, node_id, traj)
        self.tree.backpropagate_batch(zip(nodes, rewards))

    @property
    def solved(self) -> bool:
        return self.best is not None

    def result(self, started: float, denoise0: int) -> PlanResult:
        if self.best is not None:
            reward, node, traj = self.best
            schedule = self.tree.schedule(node)
            success = True
        else:
            schedule, traj = self.tree.best_path() if self.rollouts else ((), self.problem.start[None, :])
            reward = trajectory_reward(self.problem, traj)
            success = reward > 0
        return PlanResult(
            success=success,
            trajectory=traj,
            schedule=schedule,
            iterations_used=self.rollouts,
            expansions=self.expansions,
            duplicate_selection_fraction=self.duplicates / self.selections if self.selections else 0.0,
            wall_clock=time.perf_counter() - started,
            denoise_iterations=_denoise_count(self.sampler) - denoise0,
            reward=reward,
            message="" if success else "budget exhausted",
            tree=self.tree,
        )


def mctd_plan(problem: PlanningProblem, sampler: SubplanSampler, config: PlannerConfig) -> PlanResult:
    """Sequential MCTD: select, expand one subplan, simulate, back up; one rollout at a time."""
    if config.parallelism != 1:
        raise ValueError("mctd_plan runs one rollout at a time; set parallelism=1")
    sampler = _bind(sampler, problem)
    started, denoise0 = time.perf_counter(), _denoise_count(sampler)
    search = _Search(problem, sampler, config)
    tree = search.tree
    while search.rollouts < config.max_iterations:
        tree.reset_temp_counts()
        leaf = tree.select_leaf(config.exploration, 0.0)[-1]
        search.selections += 1
        actions = tree.unexpanded_actions(leaf)
        if actions:
            sub = sampler.expand_subplan(search.expansion_request(leaf, actions[0]))
            node = tree.expand(leaf, actions[0], sub.states)
            search.expansions += 1
        else:
            node = leaf
        traj = sampler.complete_trajectory(search.completion_request(node))
        search.record([node], [traj], [trajectory_reward(problem, traj)])
        search.rollouts += 1
        if search.solved and config.stop_on_goal:
            break
    return search.result(started, denoise0)


def fast_mctd_plan(problem: PlanningProblem, sampler: SubplanSampler, config: PlannerConfig) -> PlanResult:
    """Parallel search with delayed tree updates and redundancy-aware selection.

    Each round selects up to ``parallelism`` leaves against a frozen tree, expands
    and simulates all of them in two batched sampler calls, then backs every
    reward up in selection order.
    """
    sampler = _bind(sampler, problem)
    started, denoise0 = time.perf_counter(), _denoise_count(sampler)
    search = _Search(problem, sampler, config)
    tree = search.tree
    cfg = config
    while search.rollouts < cfg.max_iterations:
        k = min(cfg.parallelism, cfg.max_iterations - search.rollouts)
        tree.reset_temp_counts()
        jobs: list[tuple[int, int | None]] = []  # (leaf, action or None for a re-simulation)
        reserved: dict[int, set[int]] = {}
        seen: set[int] = set()
        while len(jobs) < k:
            leaf = tree.select_leaf(cfg.exploration, cfg.ras_weight)[-1]
            search.selections += 1
            if leaf in seen:
                search.duplicates += 1
            seen.add(leaf)
            taken = reserved.setdefault(leaf, set())
            free = tree.unexpanded_actions(leaf)
            if cfg.redundancy_aware:
                free = [a for a in free if a not in taken]
            if not free:
                jobs.append((leaf, None))
                continue
            for a in free[: min(cfg.leaf_parallel, k - len(jobs))]:
                taken.add(a)
                jobs.append((leaf, a))

        expand = [(leaf, a) for leaf, a in jobs if a is not None]
        subplans = sampler.expand_batch([search.expansion_request(leaf, a) for leaf, a in expand])
        made: dict[tuple[int, int], int] = {}
        for (leaf, a), sp in zip(expand, subplans):
            # a repeated expansion (redundancy-unaware mode) simulates the child made first
            if (leaf, a) not in made:
                made[(leaf, a)] = tree.expand(leaf, a, sp.states)
        search.expansions += len(expand)
        nodes = [made[(leaf, a)] if a is not None else leaf for leaf, a in jobs]

        trajs = sampler.complete_batch([search.completion_request(n) for n in nodes])
        search.record(nodes, trajs, trajectory_rewards(problem, trajs))
        search.rollouts += len(jobs)
        if search.solved and cfg.stop_on_goal:
            break
    return search.result(started, denoise0)


def sparse_plan(problem: PlanningProblem, sampler: SubplanSampler, config: PlannerConfig, inner: Callable = fast_mctd_plan) -> PlanResult:
    """Plan on every ``coarsen_interval``-th state, then lift the plan back to full resolution."""
    H = config.coarsen_interval
    coarse = problem.coarse(H)
    res = inner(coarse, _bind(sampler, coarse), config)
    if not res.success:
        res.message = res.message or "coarse search failed"
        return res
    try:
        dense = lift_plan(problem, res.trajectory, H)
    except LiftFailure as exc:
        return dataclasses.replace(res, success=False, reward=0.0, message=f"lift failed: {exc}")
    reward = trajectory_reward(problem, dense)
    t = goal_index(problem, dense)
    if reward > 0:
        dense = dense[: t + 1]
    return dataclasses.replace(
        res,
        success=reward > 0,
        trajectory=dense,
        reward=reward,
        message="" if reward > 0 else "lifted plan misses the goal",
    )


def replan_loop(problem: PlanningProblem, planner: Callable[[PlanningProblem, PlannerConfig], PlanResult], config: PlannerConfig) -> PlanResult:
    """Receding-horizon execution: plan, play back ``open_loop_horizon`` steps, repeat.

    ``planner(problem, config)`` is called with the start moved to the current state,
    the horizon cut to the remaining steps and a fresh seed per call. Stops at the goal or once ``problem.horizon`` steps
    have been executed.
    """
    started = time.perf_counter()
    executed = [problem.start[None, :]]
    steps = calls = rollouts = expansions = denoise = 0
    dup_weighted = 0.0
    schedule: tuple[float, ...] = ()
    current = problem.start
    while steps < problem.horizon:
        # only the steps left in the episode are available to the new plan
        sub = dataclasses.replace(problem.with_start(current), horizon=problem.horizon - steps)
        res = planner(sub, config.replace(seed=derive_seed(config.seed, calls)))
        calls += 1
        rollouts += res.iterations_used
        expansions += res.expansions
        denoise += res.denoise_iterations
        dup_weighted += res.duplicate_selection_fraction * res.iterations_used
        schedule += res.schedule
        n = min(config.open_loop_horizon, len(res.trajectory) - 1)
        if n <= 0:
            break
        executed.append(res.trajectory[1 : n + 1])
        steps += n
        current = res.trajectory[n]
        if goal_index(problem, np.concatenate(executed)) is not None:
            break
    traj = np.concatenate(executed)
    reward = trajectory_reward(problem, traj)
    if reward > 0:
        traj = traj[: goal_index(problem, traj) + 1]
    return PlanResult(
        success=reward > 0,
        trajectory=traj,
        schedule=schedule,
        iterations_used=rollouts,
        expansions=expansions,
        duplicate_selection_fraction=dup_weighted / rollouts if rollouts else 0.0,
        wall_clock=time.perf_counter() - started,
        denoise_iterations=denoise,
        reward=reward,
        planning_calls=calls,
        message="" if reward > 0 else "goal not reached",
    )


_CONFIG_KEYS = {f.name for f in dataclasses.fields(PlannerConfig)} - {"budget"}
_BUDGET_KEYS = {f.name for f in dataclasses.fields(SamplerBudget)}


def _coerce(key: str, raw: str, current):
    raw = raw.strip()
    if key == "guidance_set":
        return tuple(float(v) for v in raw.strip("()[]{}").split(",") if v.strip())
    if isinstance(current, bool):
        if raw.lower() not in {"true", "false", "1", "0", "yes", "no"}:
            raise ValueError(f"{key}: expected a boolean, got {raw!r}")
        return raw.lower() in {"true", "1", "yes"}
    if isinstance(current, int):
        return int(raw)
    return float(raw)


def config_from_mapping(values: dict, base: PlannerConfig | None = None) -> PlannerConfig:
    """Apply ``{field: value}`` overrides; budget fields (``denoise_steps`` ...) are accepted too."""
    base = base or PlannerConfig()
    top, budget = {}, {}
    for key, raw in values.items():
        if key in _CONFIG_KEYS:
            top[key] = _coerce(key, raw, getattr(base, key)) if isinstance(raw, str) else raw
        elif key in _BUDGET_KEYS:
            budget[key] = _coerce(key, raw, getattr(base.budget, key)) if isinstance(raw, str) else raw
        else:
            raise KeyError(f"unknown planner config key: {key}")
    if budget:
        top["budget"] = dataclasses.replace(base.budget, **budget)
    return dataclasses.replace(base, **top)


def parse_config(text: str, base: PlannerConfig | None = None) -> PlannerConfig:
    """Parse ``key = value`` lines (``#`` starts a comment)."""
    try:
        return config_from_mapping(config_values(text), base)
    except KeyError as exc:
        raise ValueError(exc.args[0]) from None


def config_values(text: str) -> dict[str, str]:
    """The raw ``{key: value}`` pairs of a config text; duplicate keys are an error."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


VARIANTS = ("mctd", "pmctd", "smctd", "fast", "fast-replan")


def variant_config(name: str, base: PlannerConfig | None = None) -> PlannerConfig:
    """Defaults per planner variant: sequential ones use K=1, dense ones H=1."""
    base = base or PlannerConfig()
    if name == "mctd":
        return base.replace(parallelism=1, coarsen_interval=1)
    if name == "pmctd":
        return base.replace(coarsen_interval=1)
    if name == "smctd":
        return base.replace(parallelism=1)
    if name in ("fast", "fast-replan"):
        return base
    raise ValueError(f"unknown planner {name!r}; expected one of {', '.join(VARIANTS)}")


def run_variant(name: str, problem: PlanningProblem, sampler: SubplanSampler, config: PlannerConfig) -> PlanResult:
    """Run a named variant with ``config`` taken as-is (see :func:`variant_config` for defaults)."""
    if name not in VARIANTS:
        raise ValueError(f"unknown planner {name!r}")
    if name in ("mctd", "smctd") and config.parallelism != 1:
        raise ValueError(f"{name} is sequential; parallelism must be 1, got {config.parallelism}")
    if name in ("mctd", "pmctd") and config.coarsen_interval != 1:
        raise ValueError(f"{name} plans densely; coarsen_interval must be 1, got {config.coarsen_interval}")
    inner = mctd_plan if name in ("mctd", "smctd") else fast_mctd_plan

    def plan(p, c):
        if c.coarsen_interval > 1:
            return sparse_plan(p, sampler, c, inner)
        return inner(p, _bind(sampler, p), c)

    if name == "fast-replan":
        return replan_loop(problem, plan, config)
    return plan(problem, config)
