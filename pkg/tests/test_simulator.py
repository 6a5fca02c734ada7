import csv

import numpy as np
import pytest
from conftest import table_tasks

from pbds.engine import Policy
from pbds.manifolds import ChartPoint, ChartScheme, Euclidean, TangentState
from pbds.riemannian import ConstantMetric, FunctionPotential, ZeroPotential, constant_weight, linear_damping
from pbds.scenario import latlon
from pbds.simulator import (
    IntegratorConfig,
    Trajectory,
    check_convergence,
    initial_chart_state,
    integrate,
    lyapunov_report,
    lyapunov_value,
    trajectory_deviation,
    write_csv,
)
from pbds.tasks import IdentityMap, TaskSpec, make_attractor_task, make_damping_task, make_obstacle_task

GOAL = np.array([0.0, 0.0, 1.0])


def attractor_run(sphere, scheme="hemisphere", dt=1e-3, T=20.0, start=(1.0, 0.0, 0.0), engine="pbds"):
    tasks = [make_attractor_task(GOAL, sphere), make_damping_task(sphere, 4.0)]
    cfg = IntegratorConfig(dt=dt, T=T, chart_scheme=scheme)
    init = initial_chart_state(sphere, np.array(start), np.zeros(3), cfg.chart_scheme)
    return integrate(Policy(tasks, sphere, engine), init, cfg), tasks


def constant_trajectory(e, n=5):
    e = np.asarray(e, dtype=float)
    return Trajectory(np.arange(n) * 0.1, np.zeros(n, dtype=int), np.zeros((n, 2)), np.zeros((n, 2)),
                      np.tile(e, (n, 1)), np.zeros((n, 3)), np.zeros(n))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(dt=1.0, T=0.5)
    with pytest.raises(ValueError):
        IntegratorConfig(method="leapfrog")
    cfg = IntegratorConfig(dt=1e-3, T=2.0, chart_scheme="north")
    assert cfg.chart_scheme == ChartScheme.fixed(1)
    assert cfg.steps == 2000


def test_free_particle():
    plane = Euclidean(2)
    c = 1e-9
    task = make_damping_task(plane, c)
    cfg = IntegratorConfig(dt=1e-2, T=5.0)
    traj = integrate(Policy([task], plane), TangentState(ChartPoint(0, [0.0, 0.0]), np.array([1.0, 0.0])), cfg)
    np.testing.assert_allclose(traj.coords[:, 1], 0.0, atol=1e-15)
    np.testing.assert_allclose(traj.speeds, np.exp(-c * traj.times), rtol=1e-12)
    assert traj.coords[-1, 0] == pytest.approx(5.0, rel=1e-8)
    rep = check_convergence(traj, [task])
    assert not rep.converged and not rep.velocity_ok


def test_euler_matches_rk4_roughly():
    plane = Euclidean(2)
    tasks = [make_attractor_task([1.0, 1.0], plane), make_damping_task(plane, 3.0)]
    init = TangentState(ChartPoint(0, [0.0, 0.0]), np.zeros(2))
    a = integrate(Policy(tasks, plane), init, IntegratorConfig(dt=1e-3, T=2.0, method="euler"))
    b = integrate(Policy(tasks, plane), init, IntegratorConfig(dt=1e-3, T=2.0))
    assert trajectory_deviation(a, b) < 1e-2


def test_attractor_converges(sphere):
    traj, tasks = attractor_run(sphere)
    assert traj.aborted is None
    d = np.arccos(np.clip(traj.embedded[-1] @ GOAL, -1, 1))
    assert d < 1e-3
    rep = check_convergence(traj, tasks)
    assert rep.converged, rep
    assert rep.lyapunov.violations == 0 and rep.lyapunov.strict_failures == 0
    # stays on the sphere
    assert np.abs(np.linalg.norm(traj.embedded, axis=1) - 1.0).max() < 1e-9
    # path lies on the great circle through start and goal (the y = 0 plane)
    assert np.abs(traj.embedded[:, 1]).max() < 1e-9


def test_chart_schemes_agree_short(sphere):
    runs = [attractor_run(sphere, s, T=3.0, start=latlon(-30.0, 0.0))[0] for s in ("south", "north", "hemisphere")]
    assert runs[2].chart_switches >= 1
    for i in range(3):
        for j in range(i + 1, 3):
            assert trajectory_deviation(runs[i], runs[j]) < 1e-6


def test_rk4_order(sphere):
    finals = []
    for dt in (4e-2, 2e-2, 1e-2):
        traj, _ = attractor_run(sphere, dt=dt, T=2.0)
        finals.append(traj.embedded[-1])
    e1 = np.linalg.norm(finals[0] - finals[1])
    e2 = np.linalg.norm(finals[1] - finals[2])
    assert e1 / e2 == pytest.approx(16.0, rel=0.25)


def test_collision_aborts_with_partial_trajectory(sphere):
    center = latlon(0.0, 20.0)
    tasks = [make_damping_task(sphere, 0.1), make_obstacle_task(sphere, center, 0.1)]
    start = latlon(0.0, 0.0)
    cfg = IntegratorConfig(dt=0.2, T=5.0, method="euler")
    init = initial_chart_state(sphere, start, np.array([0.0, 1.5, 0.0]), cfg.chart_scheme)
    traj = integrate(Policy(tasks, sphere), init, cfg)
    assert traj.aborted is not None and traj.aborted.startswith("collision")
    assert 0 < len(traj) < cfg.steps + 1


def test_lyapunov_value_examples(sphere):
    plane = Euclidean(3)
    damp_only = make_damping_task(plane, 1.0)
    assert lyapunov_value([TaskSpec(IdentityMap(plane), ConstantMetric(np.eye(3)), ZeroPotential())],
                          ChartPoint(0, [1.0, 2.0, 3.0]), np.zeros(3)) == 0.0
    pot = FunctionPotential(lambda x: 0.5 * x @ x, lambda x: x)
    t = TaskSpec(IdentityMap(plane), ConstantMetric(np.eye(3)), pot, linear_damping(1.0), constant_weight(np.eye(3)))
    x, v = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.4, -1.0])
    assert lyapunov_value([t], ChartPoint(0, x), v) == pytest.approx(0.5 * v @ v + 0.5 * x @ x)
    assert lyapunov_value([damp_only], ChartPoint(0, x), v) == pytest.approx(0.5 * v @ v)


def test_lyapunov_frozen_and_chart_invariant(sphere, rng):
    tasks = table_tasks(sphere, obstacles=False)
    assert lyapunov_value(tasks, ChartPoint(0, [0.5, -0.3]), np.array([0.3, -0.7])) == pytest.approx(
        2.940247358354968, abs=1e-12)
    for _ in range(20):
        p = ChartPoint(0, rng.normal(size=2))
        v = rng.normal(size=2)
        s = sphere.transition_tangent(TangentState(p, v), 1)
        assert lyapunov_value(tasks, s.point, s.velocity) == pytest.approx(lyapunov_value(tasks, p, v), abs=1e-10)


def test_convergence_at_goal_immediately(sphere):
    tasks = [make_attractor_task(GOAL, sphere), make_damping_task(sphere, 4.0)]
    cfg = IntegratorConfig(dt=1e-2, T=0.5)
    traj = integrate(Policy(tasks, sphere), TangentState(ChartPoint(0, [0.0, 0.0]), np.zeros(2)), cfg)
    rep = check_convergence(traj, tasks)
    assert rep.converged
    assert rep.max_tail_gradient == 0.0


def test_trajectory_deviation_examples():
    a = constant_trajectory([0.0, 0.0, 1.0])
    assert trajectory_deviation(a, a) == 0.0
    assert trajectory_deviation(a, constant_trajectory([0.0, 0.0, -1.0])) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        trajectory_deviation(a, constant_trajectory([0.0, 0.0, 1.0], n=4))


def test_lyapunov_report_counts():
    t = constant_trajectory([0.0, 0.0, 1.0])
    t.lyapunov[:] = [5.0, 4.0, 4.5, 4.5, 3.0]
    t.embedded_velocities[:, 0] = 1.0
    rep = lyapunov_report(t)
    assert rep.violations == 1
    assert rep.strict_failures == 2
    assert rep.max_increase == pytest.approx(0.5)


def test_write_csv_deterministic(sphere, tmp_path):
    outs = []
    for k in range(2):
        traj, _ = attractor_run(sphere, dt=1e-2, T=1.0)
        path = tmp_path / f"run{k}.csv"
        write_csv(traj, path)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    with open(tmp_path / "run0.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "chart_id", "q1", "q2", "v1", "v2", "e1", "e2", "e3", "V"]
    assert len(rows) == 102
    assert float(rows[1][0]) == 0.0


def test_lyapunov_report_counts_overflow():
    t = constant_trajectory([0.0, 0.0, 1.0])
    t.lyapunov[:] = [5.0, np.inf, np.inf, 4.0, 3.0]
    rep = lyapunov_report(t)
    assert rep.violations == 2
    assert rep.max_increase == np.inf
