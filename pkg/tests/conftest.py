import numpy as np
import pytest

from ksflow.core import GridSpec, State, zero_velocity


def make_state(grid, n, c=None, u=None, t=0.0):
    n = np.broadcast_to(np.asarray(n, dtype=float), grid.shape).copy()
    c = np.zeros(grid.shape) if c is None else np.broadcast_to(np.asarray(c, dtype=float), grid.shape).copy()
    u = zero_velocity(grid) if u is None else tuple(u)
    return State(grid=grid, n=n, c=c, u=u, p=np.zeros(grid.shape), t=t)


def random_velocity(grid, rng, scale=1.0):
    """Random face field, walls zeroed on box grids (not divergence free)."""
    u = []
    for a in range(grid.dim):
        v = scale * rng.standard_normal(grid.face_shape(a))
        if not grid.periodic:
            idx = [slice(None)] * grid.dim
            idx[a] = [0, -1]
            v[tuple(idx)] = 0.0
        u.append(v)
    return tuple(u)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["periodic", "box"])
def grid2(request):
    return GridSpec(2, (1.0, 1.5), (12, 10), request.param)


@pytest.fixture(params=["periodic", "box"])
def grid3(request):
    return GridSpec(3, (1.0, 1.0, 2.0), (6, 8, 5), request.param)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
