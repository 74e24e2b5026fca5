import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mctd.maze import load_fixture, load_maze
from mctd.trajectory import PlanningProblem, default_horizon

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# 3x3 grid with a wall in the middle
CENTER_WALL = "S..\n.#.\n..G\n"

ROOM = """\
#########
#S......#
#.......#
#...#...#
#...#...#
#...#..G#
#########
"""


@pytest.fixture
def center_wall():
    return load_maze(CENTER_WALL)


@pytest.fixture
def room():
    return load_maze(ROOM)


@pytest.fixture(scope="session")
def medium():
    m = load_fixture("medium")
    return PlanningProblem(m, default_horizon(m))


@pytest.fixture(scope="session")
def large():
    m = load_fixture("large")
    return PlanningProblem(m, default_horizon(m))


@pytest.fixture(scope="session")
def giant():
    m = load_fixture("giant")
    return PlanningProblem(m, default_horizon(m))


def straight(a, b, n):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return a + (b - a) * (np.arange(n + 1) / n)[:, None]


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
