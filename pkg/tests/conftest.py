import math
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qgraph.continuation import continue_branch, seed_point
from qgraph.discretize import constant_solution, make_system
from qgraph.graphs import ResonanceWarning, build_dumbbell

settings.register_profile("qgraph", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("qgraph")

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[tuple[int, str]] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


def dumbbell(L):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResonanceWarning)
        return build_dumbbell(L)


@pytest.fixture(scope="session")
def sys2():
    """Dumbbell L=2 on the default-resolution grid used by the continuation tests."""
    return make_system(build_dumbbell(2.0), 0.05)


@pytest.fixture(scope="session")
def constant_branch(sys2):
    lam0 = -0.01
    seed = seed_point(sys2, np.full(sys2.size, constant_solution(lam0)), lam0, -1.0)
    return continue_branch(sys2, seed, -1.0, (-3.0, 0.0), ds=0.01, origin="constant")


@pytest.fixture(scope="session")
def branch_points(constant_branch):
    return constant_branch.events_tagged("branch_point")


@pytest.fixture(scope="session")
def crossing_points(branch_points):
    """(odd, even) first crossings on the constant branch, L=2."""
    return branch_points[0], branch_points[1]


@pytest.fixture(scope="session")
def transcritical_branches(sys2, crossing_points):
    """Both halves of the branch crossing the constant one at the first even crossing."""
    from qgraph.continuation import switch_branch

    seeds = switch_branch(sys2, crossing_points[1])
    return [continue_branch(sys2, s, -1.0, (-0.8, 0.0), ds=0.01, origin="transcritical")
            for s in seeds]


@pytest.fixture(scope="session")
def shooting_roots():
    from qgraph.shooting import find_standing_waves

    return find_standing_waves(-1.0, 2.0)
