import math

import pytest

from hslab import exponents as ex
from hslab.radial import make_grid
from hslab.solver import solve

ACCEPTANCE = {}

BUBBLE_PARAMS = (3, 2.0, 5.0, 5.0, 0.0, 0.0)
BUBBLE_A = (3.0 / (4.0 * math.pi)) ** 0.25


def record(k, ok, detail):
    """Store and print one acceptance line."""
    line = f"ACCEPTANCE {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[k] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(scope="session")
def grid():
    return make_grid()


@pytest.fixture(scope="session")
def bubble_params():
    return ex.validate(*BUBBLE_PARAMS, for_solver=True)


@pytest.fixture(scope="session")
def bubble_bundle(bubble_params, grid):
    """Converged critical solution reached from the fast ansatz."""
    b = solve(bubble_params, "fast", grid=grid)
    assert b.converged, b.cause
    return b


@pytest.fixture
def tmp_cache(tmp_path):
    d = tmp_path / "cache"
    d.mkdir()
    return str(d)
