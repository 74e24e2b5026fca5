"""Trajectories over a :class:`~mctd.maze.GridMaze`: plausibility, reward, guidance cost,
coarsening and lifting.

A trajectory is a float64 array of shape ``(T + 1, 2)``; row ``t`` is the state at
timestep ``t``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .maze import GridMaze, segments_free

#: relative slack on the step-length bound, absorbs rounding in clipped steps
STEP_RTOL = 1e-9
#: slack subtracted before rounding up the number of lift increments
LIFT_EPS = 1e-9

DEFAULT_GOAL_TOLERANCE = 0.5
DEFAULT_MAX_STEP = 1.0


class LiftFailure(RuntimeError):
    def __init__(self, message: str, pair: tuple[int, int] | None = None):
        self.pair = pair
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class PlanningProblem:
    maze: GridMaze
    horizon: int
    goal_tolerance: float = DEFAULT_GOAL_TOLERANCE
    max_step_length: float = DEFAULT_MAX_STEP
    # set on coarse problems: a step counts as collision-free only if its straight
    # lift into increments of this length is
    lift_step: float | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.goal_tolerance > 0:
            raise ValueError("goal_tolerance must be > 0")
        if not self.max_step_length > 0:
            raise ValueError("max_step_length must be > 0")
        if self.lift_step is not None and not 0 < self.lift_step <= self.max_step_length:
            raise ValueError("lift_step must lie in (0, max_step_length]")

    @property
    def start(self) -> np.ndarray:
        return np.asarray(self.maze.start, dtype=np.float64)

    @property
    def goal(self) -> np.ndarray:
        return np.asarray(self.maze.goal, dtype=np.float64)

    def with_start(self, state) -> "PlanningProblem":
        return PlanningProblem(self.maze.with_start(state), self.horizon, self.goal_tolerance, self.max_step_length, self.lift_step)

    def coarse(self, interval: int) -> "PlanningProblem":
        """The problem seen by a planner working on every ``interval``-th state."""
        if interval < 1:
            raise ValueError("coarsening interval must be >= 1")
        if interval == 1:
            return self
        return PlanningProblem(
            self.maze,
            max(1, self.horizon // interval),
            self.goal_tolerance,
            self.max_step_length * interval,
            self.lift_step if self.lift_step is not None else self.max_step_length,
        )


def default_horizon(maze: GridMaze) -> int:
    """500 steps for medium/large sized mazes, 1000 for giant ones."""
    return 1000 if max(maze.width, maze.height) > 40 else 500


def as_trajectory(states) -> np.ndarray:
    traj = np.asarray(states, dtype=np.float64)
    if traj.ndim != 2 or traj.shape[1] != 2:
        traj = traj.reshape(-1, 2)
    return traj


def step_lengths(traj: np.ndarray) -> np.ndarray:
    d = np.diff(traj, axis=0)
    return np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])


def lift_counts(lengths, step: float) -> np.ndarray:
    """Number of straight increments of at most ``step`` needed per segment (at least 1)."""
    n = np.ceil(np.asarray(lengths, dtype=np.float64) / step - LIFT_EPS)
    return np.maximum(n, 1).astype(np.intp)


def lifted_segments_free(maze: GridMaze, a, b, step: float | None) -> np.ndarray:
    """Like :func:`segments_free`, but each segment is judged by its straight lift into
    increments of at most ``step``. ``step=None`` checks the segments directly.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if step is None or len(a) == 0:
        return segments_free(maze, a, b)
    d = b - a
    n = lift_counts(np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]), step)
    owner = np.repeat(np.arange(len(a)), n)
    first = np.repeat(np.cumsum(n) - n, n)
    i = (np.arange(len(owner)) - first).astype(np.float64)
    nn = n[owner].astype(np.float64)
    lo = a[owner] + d[owner] * (i / nn)[:, None]
    hi = a[owner] + d[owner] * ((i + 1.0) / nn)[:, None]
    last = i + 1.0 == nn
    hi[last] = b[owner[last]]
    ok = segments_free(maze, lo, hi)
    bad = np.zeros(len(a), dtype=bool)
    np.logical_or.at(bad, owner[~ok], True)
    return ~bad


def steps_free(problem: PlanningProblem, a, b) -> np.ndarray:
    return lifted_segments_free(problem.maze, a, b, problem.lift_step)


def is_plausible(problem: PlanningProblem, trajectory) -> bool:
    traj = as_trajectory(trajectory)
    if len(traj) == 0:
        raise ValueError("trajectory must be non-empty")
    if not np.isfinite(traj).all():
        return False
    if problem.maze.blocked_mask(traj).any():
        return False
    if len(traj) == 1:
        return True
    if (step_lengths(traj) > problem.max_step_length * (1 + STEP_RTOL)).any():
        return False
    return bool(steps_free(problem, traj[:-1], traj[1:]).all())


def goal_index(problem: PlanningProblem, trajectory) -> int | None:
    """First timestep within ``goal_tolerance`` of the goal, or None."""
    traj = as_trajectory(trajectory)
    d = traj - problem.goal
    hit = np.flatnonzero(np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]) <= problem.goal_tolerance)
    return int(hit[0]) if len(hit) else None


def trajectory_reward(problem: PlanningProblem, trajectory) -> float:
    traj = as_trajectory(trajectory)
    if len(traj) == 0:
        return 0.0
    t = goal_index(problem, traj)
    if t is None or t > problem.horizon:
        return 0.0
    if not is_plausible(problem, traj):
        return 0.0
    return (problem.horizon - t) / problem.horizon


def guidance_cost(trajectory, goal) -> float:
    """Sum of squared distances from every state to ``goal``."""
    traj = as_trajectory(trajectory)
    if len(traj) == 0:
        raise ValueError("trajectory must be non-empty")
    d = traj - np.asarray(goal, dtype=np.float64)
    return float(np.sum(d * d))


def coarsen_trajectory(trajectory, interval: int) -> np.ndarray:
    if interval < 1:
        raise ValueError("coarsening interval must be >= 1")
    traj = as_trajectory(trajectory)
    idx = list(range(0, len(traj), interval))
    if idx[-1] != len(traj) - 1:
        idx.append(len(traj) - 1)
    return traj[idx].copy()


def lift_plan(problem: PlanningProblem, coarse, substeps: int) -> np.ndarray:
    """Interpolate a coarse plan into straight increments no longer than ``max_step_length``.

    Every waypoint is visited exactly. Raises :class:`LiftFailure` when a segment is
    blocked or would need more than ``substeps`` increments.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    coarse = as_trajectory(coarse)
    if len(coarse) == 0:
        raise ValueError("coarse plan must be non-empty")
    if len(coarse) == 1:
        return coarse.copy()
    step = problem.max_step_length
    free = lifted_segments_free(problem.maze, coarse[:-1], coarse[1:], step)
    # a stationary waypoint still takes one (zero-length) step so timing is kept
    counts = lift_counts(step_lengths(coarse), step)
    out = [coarse[:1]]
    for i in range(len(coarse) - 1):
        a, b = coarse[i], coarse[i + 1]
        if not free[i]:
            raise LiftFailure(f"segment {i}->{i + 1} crosses a wall", (i, i + 1))
        n = int(counts[i])
        if n > substeps:
            raise LiftFailure(f"segment {i}->{i + 1} needs {n} > {substeps} increments", (i, i + 1))
        frac = np.arange(1, n + 1, dtype=np.float64) / n
        seg = a + (b - a) * frac[:, None]
        seg[-1] = b
        out.append(seg)
    dense = np.concatenate(out)
    if not is_plausible(problem, dense):
        raise LiftFailure("lifted plan is not plausible")
    return dense


def trajectory_rewards(problem: PlanningProblem, trajectories: Sequence[np.ndarray]) -> list[float]:
    """:func:`trajectory_reward` over many trajectories.

    Goal hits are found in one vectorised pass; only trajectories that reach the
    goal in time are checked for plausibility, again jointly.
    """
    if not trajectories:
        return []
    trajs = [as_trajectory(t) for t in trajectories]
    lengths = np.array([len(t) for t in trajs])
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    flat = np.concatenate(trajs)
    g = flat - problem.goal
    at_goal = np.sqrt(g[:, 0] * g[:, 0] + g[:, 1] * g[:, 1]) <= problem.goal_tolerance
    # first hit per trajectory (or -1)
    hit_rows = np.flatnonzero(at_goal)
    owner_of_hit = np.searchsorted(starts, hit_rows, side="right") - 1
    first = np.full(len(trajs), -1)
    uniq, pos = np.unique(owner_of_hit, return_index=True)
    first[uniq] = hit_rows[pos] - starts[uniq]
    out = [0.0] * len(trajs)
    cand = [i for i in range(len(trajs)) if 0 <= first[i] <= problem.horizon]
    if not cand:
        return out

    sub = [trajs[i] for i in cand]
    sub_len = lengths[cand]
    sflat = np.concatenate(sub)
    owner = np.repeat(np.arange(len(sub)), sub_len)
    bad = problem.maze.blocked_mask(sflat) | ~np.isfinite(sflat).all(axis=1)
    same = owner[1:] == owner[:-1]  # consecutive rows of the same trajectory
    a, b = sflat[:-1][same], sflat[1:][same]
    d = b - a
    steps = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
    seg_bad = (steps > problem.max_step_length * (1 + STEP_RTOL)) | ~steps_free(problem, a, b)
    implausible = np.zeros(len(sub), dtype=bool)
    np.logical_or.at(implausible, owner[bad], True)
    np.logical_or.at(implausible, owner[1:][same][seg_bad], True)
    for j, i in enumerate(cand):
        if not implausible[j]:
            out[i] = (problem.horizon - int(first[i])) / problem.horizon
    return out


def write_csv(trajectory, fh=None) -> str:
    """Serialise to ``t,x,y`` CSV. Returns the text; also writes it to ``fh`` if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "y"])
    for t, (x, y) in enumerate(as_trajectory(trajectory)):
        w.writerow([t, repr(float(x)), repr(float(y))])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_csv(text: str) -> np.ndarray:
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and set(rows[0]) != {"t", "x", "y"}:
        raise ValueError("trajectory CSV must have header t,x,y")
    rows.sort(key=lambda r: int(r["t"]))
    return np.array([[float(r["x"]), float(r["y"])] for r in rows], dtype=np.float64).reshape(-1, 2)
