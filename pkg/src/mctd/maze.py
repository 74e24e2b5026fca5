"""Occupancy-grid mazes: parsing, geometry queries and fixture generation.

Coordinates are continuous ``(x, y)`` pairs in cell units. ``x`` runs along
columns and ``y`` along rows; the center of cell ``(row, col)`` is
``(col + 0.5, row + 0.5)``. A point is tested against the grid by flooring.
"""

from __future__ import annotations

import math
import random
import threading
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import ndimage

WALL = "#"
FREE = "."
START = "S"
GOAL = "G"

#: samples per unit length used when checking a segment against the grid
SEGMENT_SAMPLES_PER_CELL = 4

FIXTURES = {"medium": "maze15.txt", "large": "maze31.txt", "giant": "maze63.txt"}
# recursive_division arguments (size, seed, room, doors) the fixture files were generated with
FIXTURE_PARAMS = {
    "maze15.txt": (15, 0, 1, 3),
    "maze31.txt": (31, 0, 1, 3),
    "maze63.txt": (63, 0, 1, 3),
}


class MazeParseError(ValueError):
    """Malformed maze text. ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


@dataclass(frozen=True, eq=False)
class GridMaze:
    occupancy: np.ndarray  # (height, width) bool, True = wall
    start: tuple[float, float]
    goal: tuple[float, float]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.ndim != 2 or occ.size == 0:
            raise ValueError("occupancy grid must be a non-empty 2-D array")
        occ = occ.copy()
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        for label, p in (("start", self.start), ("goal", self.goal)):
            if self.is_blocked(p):
                raise ValueError(f"{label} {p} lies in a blocked cell")

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]

    def is_blocked(self, point) -> bool:
        x, y = float(point[0]), float(point[1])
        if not (math.isfinite(x) and math.isfinite(y)):
            return True
        c, r = math.floor(x), math.floor(y)
        if r < 0 or c < 0 or r >= self.height or c >= self.width:
            return True
        return bool(self.occupancy[r, c])

    def blocked_mask(self, points: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`is_blocked` over an ``(..., 2)`` array."""
        pts = np.asarray(points, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            cols = np.floor(pts[..., 0])
            rows = np.floor(pts[..., 1])
        inside = (cols >= 0) & (rows >= 0) & (cols < self.width) & (rows < self.height)
        c = np.where(inside, cols, 0).astype(np.intp)
        r = np.where(inside, rows, 0).astype(np.intp)
        return ~inside | self.occupancy[r, c]

    def with_start(self, start) -> "GridMaze":
        """Same grid with a new start; tables already built for this grid are shared."""
        other = GridMaze(self.occupancy, (float(start[0]), float(start[1])), self.goal, name=self.name)
        for key in ("projection_table", "routes", "free_cells"):
            if key in self.__dict__:
                other.__dict__[key] = self.__dict__[key]
        return other

    def segment_free(self, a, b) -> bool:
        return bool(segments_free(self, np.asarray([a], float), np.asarray([b], float))[0])

    @cached_property
    def projection_table(self) -> np.ndarray:
        """``(height, width, 2)`` table mapping every cell to the nearest free cell center."""
        _, (rows, cols) = ndimage.distance_transform_edt(self.occupancy, return_indices=True)
        table = np.stack([cols + 0.5, rows + 0.5], axis=-1).astype(np.float64)
        table.setflags(write=False)
        return table

    @cached_property
    def routes(self) -> "RouteTable":
        """All-pairs shortest-route tables over free cells, built on first use."""
        return RouteTable.build(self.occupancy)

    @cached_property
    def free_cells(self) -> np.ndarray:
        rows, cols = np.nonzero(~self.occupancy)
        return np.stack([cols + 0.5, rows + 0.5], axis=-1)

    def project(self, points: np.ndarray) -> np.ndarray:
        """Clamp to the bounding box and move points in walls to the nearest free cell center."""
        pts = np.asarray(points, dtype=np.float64)
        out = np.empty_like(pts)
        out[..., 0] = np.minimum(np.maximum(pts[..., 0], 0.0), np.nextafter(self.width, 0))
        out[..., 1] = np.minimum(np.maximum(pts[..., 1], 0.0), np.nextafter(self.height, 0))
        c = out[..., 0].astype(np.intp)
        r = out[..., 1].astype(np.intp)
        blocked = self.occupancy[r, c]
        if blocked.any():
            out[blocked] = self.projection_table[r[blocked], c[blocked]]
        return out

    def to_text(self) -> str:
        rows = []
        sc, sr = (math.floor(v) for v in self.start)
        gc, gr = (math.floor(v) for v in self.goal)
        for r in range(self.height):
            line = []
            for c in range(self.width):
                if (r, c) == (sr, sc):
                    line.append(START)
                elif (r, c) == (gr, gc):
                    line.append(GOAL)
                else:
                    line.append(WALL if self.occupancy[r, c] else FREE)
            rows.append("".join(line))
        return "\n".join(rows) + "\n"


@dataclass(eq=False)
class RouteTable:
    """Breadth-first search results from every free cell, plus per-radius memo tables.

    Cells are numbered row-major; ``index`` maps grid positions to cell numbers
    (-1 for walls) and ``cells`` holds ``(row, col)`` per number.
    """

    index: np.ndarray
    cells: np.ndarray
    depth: np.ndarray
    parent: np.ndarray
    order: np.ndarray
    _memo: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def build(cls, occupancy: np.ndarray) -> "RouteTable":
        from . import _kernels

        rows, cols = np.nonzero(~occupancy)
        F = len(rows)
        dtype = np.int16 if F < np.iinfo(np.int16).max else np.int32
        index = np.full(occupancy.shape, -1, dtype=np.int64)
        index[rows, cols] = np.arange(F)
        cells = np.stack([rows, cols], axis=1).astype(np.int64)
        depth = np.empty((F, F), dtype=dtype)
        parent = np.empty((F, F), dtype=dtype)
        order = np.empty((F, F), dtype=dtype)
        _kernels.fill_routes(index, cells, depth, parent, order)
        return cls(index, cells, depth, parent, order)

    def memo(self, radius: int) -> np.ndarray:
        """Shared ``(origin, target) -> chosen cell`` cache for one search radius."""
        with self._lock:
            table = self._memo.get(radius)
            if table is None:
                table = self._memo[radius] = np.full(self.depth.shape, -1, dtype=self.depth.dtype)
            return table


def segments_free(maze: GridMaze, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Check many segments ``a[i] -> b[i]`` at once; both endpoints are sampled."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if len(a) == 0:
        return np.ones(0, dtype=bool)
    d = b - a
    length = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
    n = np.maximum(np.ceil(length * SEGMENT_SAMPLES_PER_CELL), 1).astype(np.intp)
    nmax = int(n.max())
    k = np.arange(nmax + 1, dtype=np.float64)
    frac = np.minimum(k[None, :] / n[:, None], 1.0)
    pts = a[:, None, :] + d[:, None, :] * frac[:, :, None]
    return ~maze.blocked_mask(pts).any(axis=1)


def load_maze(text: str, name: str = "") -> GridMaze:
    """Parse the ``# . S G`` maze grammar."""
    lines = [ln.rstrip() for ln in text.splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    if not lines:
        raise MazeParseError("empty maze")
    width = len(lines[0])
    occ = np.zeros((len(lines), width), dtype=bool)
    start = goal = None
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MazeParseError(f"ragged row: expected {width} cells, got {len(line)}", r + 1)
        for c, ch in enumerate(line):
            if ch == WALL:
                occ[r, c] = True
            elif ch == START:
                if start is not None:
                    raise MazeParseError("duplicate start", r + 1, c + 1)
                start = (c + 0.5, r + 0.5)
            elif ch == GOAL:
                if goal is not None:
                    raise MazeParseError("duplicate goal", r + 1, c + 1)
                goal = (c + 0.5, r + 0.5)
            elif ch != FREE:
                raise MazeParseError(f"unexpected character {ch!r}", r + 1, c + 1)
    if start is None:
        raise MazeParseError("missing start")
    if goal is None:
        raise MazeParseError("missing goal")
    return GridMaze(occ, start, goal, name=name)


def read_maze(path) -> GridMaze:
    """Load a maze file; bare fixture names (``medium``, ``maze15.txt``) resolve to the shipped fixtures."""
    p = Path(path)
    if not p.exists():
        p = fixture_path(str(path))
    return load_maze(p.read_text(encoding="utf-8"), name=p.stem)


def fixture_path(name: str) -> Path:
    fname = FIXTURES.get(name, Path(name).name)
    if not fname.endswith(".txt"):
        fname += ".txt"
    p = resources.files("mctd") / "fixtures" / fname
    if not p.is_file():
        raise FileNotFoundError(f"no such maze file or fixture: {name}")
    return Path(str(p))


def load_fixture(name: str) -> GridMaze:
    return read_maze(fixture_path(name))


def recursive_division(size: int, seed: int, room: int = 1, doors: int = 1) -> GridMaze:
    """Recursive-division maze on a ``size x size`` grid (size odd).

    Chambers no larger than ``room`` corridor cells on both sides are left
    undivided and every wall gets up to ``doors`` one-cell openings (more than one
    opening creates loops). Start is the top-left cell, goal the bottom-right one.
    """
    if size < 5 or size % 2 == 0:
        raise ValueError("size must be odd and >= 5")
    rng = random.Random(seed)
    n = (size - 1) // 2  # corridor cells per side
    occ = np.zeros((size, size), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True

    # chambers in corridor-cell coordinates, [x0, x1) x [y0, y1)
    stack = [(0, n, 0, n)]
    while stack:
        x0, x1, y0, y1 = stack.pop()
        w, h = x1 - x0, y1 - y0
        if w * h <= 1 or (w <= room and h <= room):
            continue
        if w < 2:
            horizontal = True
        elif h < 2:
            horizontal = False
        else:
            horizontal = h > w if h != w else rng.random() < 0.5
        if horizontal:
            k = rng.randrange(y0 + 1, y1)  # wall between corridor rows k-1 and k
            row = 2 * k
            occ[row, 2 * x0 : 2 * x1 + 1] = True
            for d in rng.sample(range(x0, x1), min(doors, w)):
                occ[row, 2 * d + 1] = False
            stack += [(x0, x1, y0, k), (x0, x1, k, y1)]
        else:
            k = rng.randrange(x0 + 1, x1)
            col = 2 * k
            occ[2 * y0 : 2 * y1 + 1, col] = True
            for d in rng.sample(range(y0, y1), min(doors, h)):
                occ[2 * d + 1, col] = False
            stack += [(x0, k, y0, y1), (k, x1, y0, y1)]
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    return GridMaze(occ, (1.5, 1.5), (size - 1.5, size - 1.5), name=f"maze{size}")


def generate_fixture(fname: str) -> GridMaze:
    size, seed, room, doors = FIXTURE_PARAMS[fname]
    return recursive_division(size, seed, room=room, doors=doors)
