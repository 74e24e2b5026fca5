"""Subplan sampler contract and a deterministic iterative-denoising surrogate.

The surrogate stands in for a trained diffusion planner. A block of states is
initialised from seeded noise, then refined for a number of denoising iterations;
each iteration

1. smooths every state towards the mean of its neighbours,
2. pulls every state towards the goal in proportion to the guidance scale,
3. projects states that landed in walls onto the nearest free cell,
4. re-walks the chain from the prefix endpoint so that every step is at most
   ``max_step_length`` long and never crosses a wall. A step that would hit a
   wall is replaced by a detour: the walker heads for the cell, among those a
   bounded number of moves away, that lies nearest to its target.

Expansion runs the full ``denoise_steps`` iterations. Jumpy completion runs
``ceil(denoise_steps / jump_interval)`` iterations, each one compounding
``jump_interval`` steps worth of smoothing and attraction.

Batched entry points pad requests to a common length, run the iterations on one
packed array and strip the padding. Every row is computed with element-wise
operations only, so a batched result is bit-identical to the single call.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import _kernels
from .maze import SEGMENT_SAMPLES_PER_CELL
from .trajectory import PlanningProblem, as_trajectory


@dataclass(frozen=True)
class Subplan:
    states: np.ndarray
    noise_level: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.noise_level <= 1.0:
            raise ValueError("noise_level must lie in [0, 1]")

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class SamplerBudget:
    denoise_steps: int = 20
    jump_interval: int = 10
    smoothing: float = 0.5
    attraction: float = 0.05
    jitter: float = 1.0  # per-state noise amplitude, in units of max_step_length
    lookahead: float = 12.0  # detour search radius when a step hits a wall, in max_step_length units

    def __post_init__(self):
        if self.denoise_steps < 1:
            raise ValueError("denoise_steps must be >= 1")
        if not 1 <= self.jump_interval <= self.denoise_steps:
            raise ValueError("jump_interval must lie in [1, denoise_steps]")
        if self.lookahead < 0:
            raise ValueError("lookahead must be >= 0")

    @property
    def jumpy_steps(self) -> int:
        return math.ceil(self.denoise_steps / self.jump_interval)

    def jumpy_schedule(self) -> list[int]:
        """Substeps compounded by each jumpy iteration."""
        full, rest = divmod(self.denoise_steps, self.jump_interval)
        return [self.jump_interval] * full + ([rest] if rest else [])


@dataclass(frozen=True, eq=False)
class SamplerRequest:
    prefix: np.ndarray
    guidance: float
    subplan_length: int
    seed: int

    def __post_init__(self):
        if self.subplan_length < 1:
            raise ValueError("subplan_length must be >= 1")
        object.__setattr__(self, "prefix", as_trajectory(self.prefix))
        if len(self.prefix) == 0:
            raise ValueError("prefix must contain at least the start state")


@dataclass(frozen=True, eq=False)
class CompletionRequest:
    prefix: np.ndarray
    schedule: tuple[float, ...]
    remaining_subplans: int
    seed: int
    subplan_length: int
    last_length: int | None = None  # length of the final block, defaults to subplan_length

    def __post_init__(self):
        if self.remaining_subplans < 0:
            raise ValueError("remaining_subplans must be >= 0")
        if self.remaining_subplans and not self.schedule:
            raise ValueError("a non-empty completion needs at least one guidance level")
        object.__setattr__(self, "prefix", as_trajectory(self.prefix))
        object.__setattr__(self, "schedule", tuple(float(g) for g in self.schedule))

    def blocks(self) -> list[tuple[int, float]]:
        """``(length, guidance)`` per remaining subplan; the schedule's last level is extended."""
        out = []
        for j in range(self.remaining_subplans):
            n = self.subplan_length
            if j == self.remaining_subplans - 1 and self.last_length is not None:
                n = self.last_length
            g = self.schedule[min(j, len(self.schedule) - 1)]
            out.append((n, g))
        return out


class SubplanSampler(Protocol):
    def expand_subplan(self, request: SamplerRequest) -> Subplan: ...

    def complete_trajectory(self, request: CompletionRequest) -> np.ndarray: ...

    def expand_batch(self, requests: Sequence[SamplerRequest]) -> list[Subplan]: ...

    def complete_batch(self, requests: Sequence[CompletionRequest]) -> list[np.ndarray]: ...


@dataclass
class SamplerMetrics:
    """Counters; ``denoise_iterations`` is per request, ``joint_iterations`` per packed kernel pass."""

    denoise_iterations: int = 0
    expansion_iterations: int = 0
    completion_iterations: int = 0
    states_processed: int = 0
    requests: int = 0
    joint_iterations: int = 0
    kernel_calls: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def snapshot(self) -> dict:
        return {k: v for k, v in vars(self).items() if not k.startswith("_")}

    def reset(self):
        for k in self.snapshot():
            setattr(self, k, 0)


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


@dataclass
class _Job:
    anchor: np.ndarray
    init: np.ndarray  # (n, 2)
    gains: np.ndarray  # (n,) guidance scale per state


def _init_block(problem: PlanningProblem, budget: SamplerBudget, anchor, blocks, seed) -> _Job:
    """Seeded noise: each block heads for a uniform random point in the maze box, plus jitter."""
    maze = problem.maze
    rng = np.random.default_rng(seed)
    sizes = np.array([n for n, _ in blocks], dtype=np.intp)
    n_total = int(sizes.sum())
    waypoints = rng.random((len(blocks), 2)) * np.array([maze.width, maze.height], dtype=np.float64)
    jitter = (rng.random((n_total, 2)) * 2.0 - 1.0) * (budget.jitter * problem.max_step_length)
    anchor = np.asarray(anchor, dtype=np.float64)
    origins = np.concatenate([anchor[None, :], waypoints[:-1]])
    block = np.repeat(np.arange(len(blocks)), sizes)
    pos = np.arange(n_total) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    frac = (pos + 1.0) / sizes[block]
    init = origins[block] + (waypoints[block] - origins[block]) * frac[:, None] + jitter
    gains = np.array([g for _, g in blocks], dtype=np.float64)[block]
    return _Job(anchor, init, gains)


def _run_jobs(problem: PlanningProblem, budget: SamplerBudget, jobs: list[_Job], substeps: list[int]) -> list[np.ndarray]:
    """Pack ``jobs`` into one padded array and run the denoising iterations jointly."""
    maze = problem.maze
    B = len(jobs)
    lengths = np.array([len(j.init) for j in jobs], dtype=np.int64)
    Lmax = int(lengths.max())
    anchors = np.stack([j.anchor for j in jobs])
    X = np.repeat(anchors[:, None, :], Lmax, axis=1)  # pad value: prefix endpoint
    G = np.zeros((B, Lmax), dtype=np.float64)
    for b, j in enumerate(jobs):
        X[b, : lengths[b]] = j.init
        G[b, : lengths[b]] = j.gains
    X = maze.project(X)

    idx = np.arange(Lmax)
    right = np.where(idx[None, :] < lengths[:, None], np.minimum(idx[None, :] + 1, lengths[:, None] - 1), idx[None, :])
    rows = np.arange(B)[:, None]
    goal = problem.goal
    occ = maze.occupancy
    step = float(problem.max_step_length)

    # the search window is measured in steps, so coarse problems see further
    radius = int(math.ceil(budget.lookahead * step))
    lift = float(problem.lift_step) if problem.lift_step is not None else 0.0
    rt = maze.routes
    nav = (rt.index, rt.cells, rt.depth, rt.parent, rt.order, rt.memo(radius))
    levels, level_idx = np.unique(G, return_inverse=True)
    level_idx = level_idx.reshape(G.shape)
    for m in substeps:
        if m == 1:
            lam = budget.smoothing
            coef = [budget.attraction * g for g in levels.tolist()]
        else:
            lam = 1.0 - (1.0 - budget.smoothing) ** m
            coef = [1.0 - (1.0 - budget.attraction * g) ** m for g in levels.tolist()]
        A = np.asarray(coef, dtype=np.float64)[level_idx]
        left = np.concatenate([anchors[:, None, :], X[:, :-1]], axis=1)
        X = (1.0 - lam) * X + (lam * 0.5) * (left + X[rows, right])
        X = X + A[:, :, None] * (goal - X)
        X = maze.project(X)
        _kernels.chain_clip(X, lengths, anchors, occ, step, float(SEGMENT_SAMPLES_PER_CELL), lift, radius, *nav)
    return [X[b, : lengths[b]].copy() for b in range(B)]


class SurrogateDenoiser:
    """Deterministic surrogate satisfying :class:`SubplanSampler` for one problem.

    ``workers`` threads each take a contiguous chunk of at least ``min_chunk``
    requests; results are returned in request order.
    """

    def __init__(self, problem: PlanningProblem, budget: SamplerBudget | None = None, workers: int = 1, min_chunk: int = 64):
        self.problem = problem
        self.budget = budget or SamplerBudget()
        self.workers = max(1, int(workers))
        self.min_chunk = max(1, int(min_chunk))
        self.metrics = SamplerMetrics()
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def with_problem(self, problem: PlanningProblem) -> "SurrogateDenoiser":
        """A sampler for a related problem that shares this one's pool and metrics."""
        other = SurrogateDenoiser.__new__(SurrogateDenoiser)
        other.__dict__.update(self.__dict__)
        other.problem = problem
        return other

    # single-request entry points go through the same packed kernel as batches
    def expand_subplan(self, request: SamplerRequest) -> Subplan:
        return self.expand_batch([request])[0]

    def complete_trajectory(self, request: CompletionRequest) -> np.ndarray:
        return self.complete_batch([request])[0]

    def expand_batch(self, requests: Sequence[SamplerRequest]) -> list[Subplan]:
        if not requests:
            return []
        jobs = [
            _init_block(self.problem, self.budget, r.prefix[-1], [(r.subplan_length, float(r.guidance))], r.seed)
            for r in requests
        ]
        out = self._dispatch(jobs, [1] * self.budget.denoise_steps)
        m = self.metrics
        with m._lock:
            m.requests += len(requests)
            m.expansion_iterations += self.budget.denoise_steps * len(requests)
            m.denoise_iterations += self.budget.denoise_steps * len(requests)
            m.states_processed += self.budget.denoise_steps * sum(len(s) for s in out)
        return [Subplan(s, 0.0) for s in out]

    def complete_batch(self, requests: Sequence[CompletionRequest]) -> list[np.ndarray]:
        if not requests:
            return []
        out: list[np.ndarray | None] = [None] * len(requests)
        jobs, where = [], []
        for i, r in enumerate(requests):
            blocks = r.blocks()
            if sum(n for n, _ in blocks) == 0:
                out[i] = r.prefix.copy()
                continue
            jobs.append(_init_block(self.problem, self.budget, r.prefix[-1], blocks, r.seed))
            where.append(i)
        schedule = self.budget.jumpy_schedule()
        if jobs:
            for i, states in zip(where, self._dispatch(jobs, schedule)):
                out[i] = np.concatenate([requests[i].prefix, states])
        m = self.metrics
        with m._lock:
            m.requests += len(requests)
            m.completion_iterations += len(schedule) * len(jobs)
            m.denoise_iterations += len(schedule) * len(jobs)
            m.states_processed += len(schedule) * sum(len(j.init) for j in jobs)
        return out

    def _dispatch(self, jobs: list[_Job], substeps: list[int]) -> list[np.ndarray]:
        size = max(self.min_chunk, math.ceil(len(jobs) / self.workers))
        chunks = [jobs[i : i + size] for i in range(0, len(jobs), size)]
        with self.metrics._lock:
            self.metrics.kernel_calls += len(chunks)
            self.metrics.joint_iterations += len(substeps)
        if self._pool is None or len(chunks) == 1:
            results = [_run_jobs(self.problem, self.budget, c, substeps) for c in chunks]
        else:
            results = list(self._pool.map(lambda c: _run_jobs(self.problem, self.budget, c, substeps), chunks))
        return [s for chunk in results for s in chunk]


def warm_up(problem: PlanningProblem, budget: SamplerBudget | None = None, intervals=(1,)):
    """Load compiled kernels and build the maze route table ahead of a timed run."""
    budget = budget or SamplerBudget()
    for H in intervals:
        p = problem.coarse(H)
        s = SurrogateDenoiser(p, budget)
        s.expand_batch([SamplerRequest(p.start[None, :], 1.0, 2, 0)])
        s.complete_batch([CompletionRequest(p.start[None, :], (1.0,), 1, 0, 2)])


def expand_subplan(request: SamplerRequest, budget: SamplerBudget, problem: PlanningProblem) -> Subplan:
    return SurrogateDenoiser(problem, budget).expand_subplan(request)


def complete_trajectory(request: CompletionRequest, budget: SamplerBudget, problem: PlanningProblem) -> np.ndarray:
    return SurrogateDenoiser(problem, budget).complete_trajectory(request)


def expand_batch(requests, budget: SamplerBudget, problem: PlanningProblem, workers: int = 1) -> list[Subplan]:
    with SurrogateDenoiser(problem, budget, workers=workers) as s:
        return s.expand_batch(requests)


def complete_batch(requests, budget: SamplerBudget, problem: PlanningProblem, workers: int = 1) -> list[np.ndarray]:
    with SurrogateDenoiser(problem, budget, workers=workers) as s:
        return s.complete_batch(requests)
