import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import ROOM
from mctd.maze import (
    FIXTURE_PARAMS,
    FIXTURES,
    MazeParseError,
    fixture_path,
    generate_fixture,
    load_fixture,
    load_maze,
    read_maze,
    recursive_division,
    segments_free,
)


def test_center_wall_parse(center_wall):
    assert center_wall.width == 3 and center_wall.height == 3
    assert center_wall.occupancy[1, 1]
    assert center_wall.occupancy.sum() == 1
    assert center_wall.start == (0.5, 0.5)
    assert center_wall.goal == (2.5, 2.5)


def test_duplicate_goal():
    with pytest.raises(MazeParseError, match="duplicate goal") as exc:
        load_maze("S.G\n..G\n")
    assert (exc.value.line, exc.value.column) == (2, 3)


@pytest.mark.parametrize(
    "text, message",
    [
        ("SS.\n..G\n", "duplicate start"),
        ("...\n..G\n", "missing start"),
        ("S..\n...\n", "missing goal"),
        ("S..\n.G\n", "ragged row"),
        ("S.x\n..G\n", "unexpected character"),
        ("\n\n", "empty maze"),
    ],
)
def test_parse_errors(text, message):
    with pytest.raises(MazeParseError, match=message):
        load_maze(text)


def test_ragged_row_position():
    with pytest.raises(MazeParseError) as exc:
        load_maze("S...\n...\n...G\n")
    assert exc.value.line == 2


def test_medium_fixture_size():
    # count the cells of the shipped file directly
    rows = [r for r in fixture_path("medium").read_text().splitlines() if r]
    assert (len(rows[0]), len(rows)) == (15, 15)
    m = load_fixture("medium")
    assert (m.width, m.height) == (15, 15)


@pytest.mark.parametrize("fname", sorted(FIXTURE_PARAMS))
def test_fixtures_regenerate(fname):
    assert fixture_path(fname).read_text() == generate_fixture(fname).to_text()


def test_fixture_names():
    for name, fname in FIXTURES.items():
        assert read_maze(name).name == fname[:-4]
    assert read_maze("fixtures/maze31.txt").width == 31
    with pytest.raises(FileNotFoundError):
        read_maze("no_such_maze")


@given(st.integers(2, 12), st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3))
def test_recursive_division_connected(half, seed, room, doors):
    size = 2 * half + 1
    m = recursive_division(size, seed, room=room, doors=doors)
    assert load_maze(m.to_text()).occupancy.tolist() == m.occupancy.tolist()
    assert m.occupancy[0].all() and m.occupancy[-1].all()
    g = _grid_graph(m.occupancy)
    assert nx.is_connected(g)


def _grid_graph(occ):
    g = nx.Graph()
    H, W = occ.shape
    for r in range(H):
        for c in range(W):
            if occ[r, c]:
                continue
            g.add_node((r, c))
            for dr, dc in ((1, 0), (0, 1)):
                rr, cc = r + dr, c + dc
                if rr < H and cc < W and not occ[rr, cc]:
                    g.add_edge((r, c), (rr, cc))
    return g


@pytest.mark.parametrize("seed", [0, 3])
def test_route_table_matches_bfs_oracle(seed):
    m = recursive_division(11, seed, room=2, doors=2)
    rt = m.routes
    g = _grid_graph(m.occupancy)
    lengths = dict(nx.all_pairs_shortest_path_length(g))
    for o, (r, c) in enumerate(rt.cells):
        for k, (rr, cc) in enumerate(rt.cells):
            want = lengths[(r, c)].get((rr, cc), -1)
            assert rt.depth[o, k] == want
            if want > 0:
                # parent is one move closer to the origin
                p = rt.parent[o, k]
                assert rt.depth[o, p] == want - 1
                assert abs(rt.cells[p] - rt.cells[k]).sum() == 1


def test_with_start_shares_tables(room):
    rt = room.routes
    other = room.with_start((3.5, 2.5))
    assert other.routes is rt
    assert other.start == (3.5, 2.5) and other.goal == room.goal


def _segment_oracle(occ, a, b, spc=4):
    # plain-python sampling, the reference for the vectorised check
    length = math.dist(a, b)
    n = max(math.ceil(length * spc), 1)
    for k in range(n + 1):
        f = min(k / n, 1.0)
        x = a[0] + (b[0] - a[0]) * f
        y = a[1] + (b[1] - a[1]) * f
        c, r = math.floor(x), math.floor(y)
        if r < 0 or c < 0 or r >= occ.shape[0] or c >= occ.shape[1] or occ[r, c]:
            return False
    return True


coord = st.floats(-0.5, 9.5, allow_nan=False)


@given(st.lists(st.tuples(coord, coord, coord, coord), min_size=1, max_size=20))
def test_segments_free_matches_oracle(segs):
    m = load_maze(ROOM)
    a = np.array([s[:2] for s in segs])
    b = np.array([s[2:] for s in segs])
    got = segments_free(m, a, b)
    want = [_segment_oracle(m.occupancy, tuple(p), tuple(q)) for p, q in zip(a, b)]
    assert got.tolist() == want


@given(st.lists(st.tuples(st.floats(-3, 12, allow_nan=False), st.floats(-3, 12, allow_nan=False)), min_size=1, max_size=30))
def test_project_lands_in_free_cells(points):
    m = load_maze(ROOM)
    pts = np.array(points)
    out = m.project(pts)
    assert not m.blocked_mask(out).any()
    free = ~m.blocked_mask(pts)
    assert np.array_equal(out[free], pts[free])
