import numpy as np
import pytest

from pbds.manifolds import Sphere
from pbds.scenario import latlon
from pbds.tasks import make_attractor_task, make_damping_task, make_obstacle_task


@pytest.fixture
def sphere():
    return Sphere(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def table_tasks(sphere, obstacles=True):
    """Attractor, damping and (optionally) two ball obstacles on S^2."""
    tasks = [make_attractor_task(latlon(30.0, 60.0), sphere), make_damping_task(sphere, 4.0)]
    if obstacles:
        tasks += [
            make_obstacle_task(sphere, latlon(-5.0, 25.0), 0.15),
            make_obstacle_task(sphere, latlon(15.0, 50.0), 0.12),
        ]
    return tasks


def random_sphere_state(sphere, rng, chart=None, scale=0.8):
    chart = int(rng.integers(2)) if chart is None else chart
    x = rng.normal(size=2) * scale
    return sphere.point(x, chart), rng.normal(size=2)


def free_sphere_state(sphere, rng, chart=None, scale=0.8, clearance=0.02):
    """Random state outside the two :func:`table_tasks` obstacles."""
    centers = [(latlon(-5.0, 25.0), 0.15), (latlon(15.0, 50.0), 0.12)]
    while True:
        p, v = random_sphere_state(sphere, rng, chart, scale)
        e = sphere.chart_to_embedding(p)
        if all(np.linalg.norm(e - c) - r > clearance for c, r in centers):
            return p, v


def fd_jacobian(fn, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.shape[0]):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h))
    return np.column_stack(cols)


# one verdict line per acceptance criterion, shown after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
