"""Compiled inner loops for the surrogate denoiser.

The sample-point arithmetic in ``_segment_free`` mirrors
:func:`mctd.maze.segments_free` operation for operation, so a chain accepted here
is accepted by :func:`mctd.trajectory.is_plausible`.
"""

import math

import numpy as np
from numba import njit

LIFT_EPS = 1e-9  # keep equal to mctd.trajectory.LIFT_EPS


@njit(cache=True, nogil=True)
def _blocked(occ, x, y):
    c = math.floor(x)
    r = math.floor(y)
    if c < 0 or r < 0 or r >= occ.shape[0] or c >= occ.shape[1]:
        return True
    return occ[int(r), int(c)]


@njit(cache=True, nogil=True)
def _segment_free(occ, ax, ay, bx, by, samples_per_cell):
    dx = bx - ax
    dy = by - ay
    length = math.sqrt(dx * dx + dy * dy)
    n = max(math.ceil(length * samples_per_cell), 1.0)
    k = 0.0
    while k <= n:
        f = min(k / n, 1.0)
        if _blocked(occ, ax + dx * f, ay + dy * f):
            return False
        k += 1.0
    return True


@njit(cache=True, nogil=True)
def _step_free(occ, ax, ay, bx, by, samples_per_cell, lift_step):
    """Mirrors :func:`mctd.trajectory.lifted_segments_free`; ``lift_step <= 0`` checks directly."""
    if lift_step <= 0.0:
        return _segment_free(occ, ax, ay, bx, by, samples_per_cell)
    dx = bx - ax
    dy = by - ay
    n = max(math.ceil(math.sqrt(dx * dx + dy * dy) / lift_step - LIFT_EPS), 1.0)
    i = 0.0
    while i < n:
        lx = ax + dx * (i / n)
        ly = ay + dy * (i / n)
        if i + 1.0 == n:
            hx = bx
            hy = by
        else:
            hx = ax + dx * ((i + 1.0) / n)
            hy = ay + dy * ((i + 1.0) / n)
        if not _segment_free(occ, lx, ly, hx, hy, samples_per_cell):
            return False
        i += 1.0
    return True


@njit(cache=True, nogil=True)
def fill_routes(index, cells, depth, parent, order):
    """Breadth-first search from every free cell (4-connected).

    Row ``o`` of ``depth``/``parent`` holds move counts and predecessors on
    shortest routes from cell ``o``; ``order[o]`` lists reached cells by depth,
    padded with -1.
    """
    H, W = index.shape
    F = cells.shape[0]
    for o in range(F):
        for k in range(F):
            depth[o, k] = -1
            order[o, k] = -1
        depth[o, o] = 0
        parent[o, o] = o
        order[o, 0] = o
        head = 0
        tail = 1
        while head < tail:
            k = order[o, head]
            head += 1
            r = cells[k, 0]
            c = cells[k, 1]
            for m in range(4):
                nr = r
                nc = c
                if m == 0:
                    nr += 1
                elif m == 1:
                    nr -= 1
                elif m == 2:
                    nc += 1
                else:
                    nc -= 1
                if nr < 0 or nc < 0 or nr >= H or nc >= W:
                    continue
                n = index[nr, nc]
                if n < 0 or depth[o, n] >= 0:
                    continue
                depth[o, n] = depth[o, k] + 1
                parent[o, n] = k
                order[o, tail] = n
                tail += 1


@njit(cache=True, nogil=True)
def _best_cell(o, t, radius, cells, depth, order, memo):
    """Cell within ``radius`` moves of ``o`` whose center is nearest to the center of ``t``.

    Ties keep the cell reached first; the answer is memoised per (o, t).
    """
    b = memo[o, t]
    if b >= 0:
        return b
    d = depth[o, t]
    if d >= 0 and d <= radius:
        b = t
    else:
        tr = cells[t, 0]
        tc = cells[t, 1]
        b = o
        best = (cells[o, 0] - tr) ** 2 + (cells[o, 1] - tc) ** 2
        for k in range(1, order.shape[1]):
            n = order[o, k]
            if n < 0 or depth[o, n] > radius:
                break
            e = (cells[n, 0] - tr) ** 2 + (cells[n, 1] - tc) ** 2
            if e < best:
                b = n
                best = e
    memo[o, t] = b
    return b


@njit(cache=True, nogil=True)
def _detour(occ, px, py, qx, qy, max_step, samples_per_cell, lift_step, radius, index, cells, depth, parent, order, memo, route):
    """Next position when the straight step towards ``(qx, qy)`` is blocked.

    Among cells within ``radius`` moves, head for the one nearest to the target's
    cell and advance along a shortest route to it as far as one straight,
    collision-free step allows. Stays put when no such cell beats the current one.
    """
    o = index[int(math.floor(py)), int(math.floor(px))]
    t = index[int(math.floor(qy)), int(math.floor(qx))]
    if o < 0 or t < 0:
        return px, py
    b = _best_cell(o, t, radius, cells, depth, order, memo)
    if b == o:
        return px, py
    n = depth[o, b]
    k = b
    for j in range(n - 1, -1, -1):
        route[j] = k
        k = parent[o, k]
    # only the first few route cells can be within one step
    m = min(n, int(math.ceil(2.0 * max_step)) + 1)
    for j in range(m - 1, -1, -1):
        k = route[j]
        cx = cells[k, 1] + 0.5
        cy = cells[k, 0] + 0.5
        dx = cx - px
        dy = cy - py
        if math.sqrt(dx * dx + dy * dy) <= max_step and _step_free(occ, px, py, cx, cy, samples_per_cell, lift_step):
            return cx, cy
    k = route[0]
    tx = cells[k, 1] + 0.5 - px
    ty = cells[k, 0] + 0.5 - py
    for _ in range(2):
        d = math.sqrt(tx * tx + ty * ty)
        if d > max_step:
            s = max_step / d
            tx = tx * s
            ty = ty * s
        if _step_free(occ, px, py, px + tx, py + ty, samples_per_cell, lift_step):
            return px + tx, py + ty
        # re-center inside the current cell, always a free move
        tx = cells[o, 1] + 0.5 - px
        ty = cells[o, 0] + 0.5 - py
    return px, py


@njit(cache=True, nogil=True)
def chain_clip(states, lengths, anchors, occ, max_step, samples_per_cell, lift_step, radius, index, cells, depth, parent, order, memo):
    """Walk each row from its anchor towards successive targets, in place.

    A step is shortened to ``max_step``. If the straight step crosses a wall the
    walker detours along a route found within ``radius`` moves (see ``_detour``);
    with ``radius`` 0 it slides along the dominant axis, then the other, else
    stays put.
    """
    route = np.empty(cells.shape[0], dtype=np.int64)
    for b in range(states.shape[0]):
        px = anchors[b, 0]
        py = anchors[b, 1]
        for i in range(lengths[b]):
            qx = states[b, i, 0]
            qy = states[b, i, 1]
            dx = qx - px
            dy = qy - py
            d = math.sqrt(dx * dx + dy * dy)
            if d > max_step:
                s = max_step / d
                dx = dx * s
                dy = dy * s
            if _step_free(occ, px, py, px + dx, py + dy, samples_per_cell, lift_step):
                px = px + dx
                py = py + dy
            elif radius > 0:
                px, py = _detour(occ, px, py, qx, qy, max_step, samples_per_cell, lift_step, radius, index, cells, depth, parent, order, memo, route)
            elif abs(dx) >= abs(dy):
                if dx != 0.0 and _step_free(occ, px, py, px + dx, py, samples_per_cell, lift_step):
                    px = px + dx
                elif dy != 0.0 and _step_free(occ, px, py, px, py + dy, samples_per_cell, lift_step):
                    py = py + dy
            else:
                if dy != 0.0 and _step_free(occ, px, py, px, py + dy, samples_per_cell, lift_step):
                    py = py + dy
                elif dx != 0.0 and _step_free(occ, px, py, px + dx, py, samples_per_cell, lift_step):
                    px = px + dx
            states[b, i, 0] = px
            states[b, i, 1] = py
