import json

import numpy as np
import pytest

from pbds.cli import main
from pbds.scenario import (
    ScenarioError,
    bench,
    bundled_scenarios,
    consistency_test,
    east_north,
    latlon,
    load_scenario,
    run,
    simulate,
)


def attractor_dict(**over):
    d = {
        "name": "mini",
        "manifold": {"kind": "sphere2"},
        "tasks": [{"type": "attractor", "goal_latlon_deg": [30.0, 60.0]}, {"type": "damping", "c": 4.0}],
        "initial": {"position_latlon_deg": [-30.0, 0.0]},
        "integrator": {"dt": 0.01, "T": 2.0},
    }
    d.update(over)
    return d


def write(tmp_path, data, name="scn.json"):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data))
    return str(path)


def test_latlon_and_east_north():
    np.testing.assert_allclose(latlon(0.0, 0.0), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(latlon(90.0, 0.0), [0.0, 0.0, 1.0], atol=1e-15)
    e = latlon(20.0, 40.0)
    east, north = east_north(e)
    np.testing.assert_allclose([east @ e, north @ e, east @ north], 0.0, atol=1e-15)
    assert north[2] > 0 and np.linalg.norm(east) == pytest.approx(1.0)


def test_bundled_scenarios_load():
    names = [load_scenario(p).name for p in bundled_scenarios()]
    assert {"sphere_attractor", "sphere_obstacles"} <= set(names)
    scn = load_scenario("sphere_obstacles")
    assert len(scn.tasks) == 5 and len(scn.obstacles) == 3
    assert len(scn.starts) == 8
    for e, u in scn.starts:
        assert abs(u @ e) < 1e-12 and np.linalg.norm(u) == pytest.approx(1.0)


def test_random_directions_seeded():
    d = attractor_dict(initial={"position_latlon_deg": [-30.0, 0.0], "random_directions": 3})
    a = load_scenario(dict(d, seed=7)).starts
    b = load_scenario(dict(d, seed=7)).starts
    c = load_scenario(dict(d, seed=8)).starts
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    assert not np.array_equal(a[0][1], c[0][1])


def test_schema_errors(tmp_path):
    with pytest.raises(ScenarioError, match="line 1"):
        load_scenario(write(tmp_path, "{not json"))
    with pytest.raises(ScenarioError, match="tasks"):
        load_scenario({"manifold": {"kind": "sphere2"}, "initial": {}})
    with pytest.raises(ScenarioError, match="tasks/0"):
        load_scenario(attractor_dict(tasks=[{"type": "teleport"}]))
    with pytest.raises(ScenarioError, match="radius"):
        load_scenario(attractor_dict(tasks=[{"type": "obstacle", "center": [1.0, 0.0, 0.0]}]))
    with pytest.raises(ScenarioError):
        load_scenario(attractor_dict(manifold={"kind": "torus"}))
    with pytest.raises(ScenarioError):
        load_scenario(str(tmp_path / "missing.json"))
    with pytest.raises(ScenarioError, match="components"):
        load_scenario(attractor_dict(initial={"position": [1.0, 0.0]}))


def test_run_writes_outputs(tmp_path):
    scn = load_scenario(attractor_dict(integrator={"dt": 0.001, "T": 20.0}))
    report, trajs = run(scn, tmp_path)
    assert report.converged and report.final_goal_distance < 1e-3
    assert report.lyapunov_violations == 0
    assert report.min_obstacle_distance is None
    assert report.evals_per_second > 0
    data = json.loads((tmp_path / "mini_pbds_report.json").read_text())
    for key in ("final_goal_distance", "min_obstacle_distance", "lyapunov_violations", "evals_per_second",
                "converged"):
        assert key in data
    assert (tmp_path / "mini_pbds_run0.csv").exists()


def test_tree_engine_run():
    scn = load_scenario("sphere_obstacles")
    scn.starts = scn.starts[:1]
    from pbds.simulator import IntegratorConfig

    scn.config = IntegratorConfig(0.01, 1.0)
    tree = simulate(scn, "pbds_tree")[0]
    flat = simulate(scn, "pbds")[0]
    assert np.abs(tree.embedded - flat.embedded).max() < 1e-8


def test_consistency_requires_multiple_charts():
    scn = load_scenario(attractor_dict(manifold={"kind": "euclidean", "dim": 2},
                                       tasks=[{"type": "attractor", "goal": [1.0, 1.0]}, {"type": "damping"}],
                                       initial={"position": [0.0, 0.0]}))
    with pytest.raises(ScenarioError):
        consistency_test(scn)


def test_consistency_short_horizon():
    scn = load_scenario(attractor_dict(integrator={"dt": 0.001, "T": 2.0}))
    pb = consistency_test(scn, "pbds")
    gd = consistency_test(scn, "gds")
    assert pb.passed and pb.max_deviation < 1e-6
    assert gd.passed is None
    assert gd.max_deviation >= 100 * pb.max_deviation


def test_bench_zero_and_small():
    scn = load_scenario("sphere_obstacles")
    empty = bench(scn, 0)
    assert empty.iterations == 0 and empty.evals_per_second == 0.0
    rep = bench(scn, 300, generic_samples=50)
    assert rep.compiled and rep.task_count == 5
    assert rep.evals_per_second > 0
    assert rep.tree_max_difference < 1e-10


def test_cli_run_and_exit_codes(tmp_path, capsys):
    good = write(tmp_path, attractor_dict(assertions={"final_goal_distance": 1e-3}))
    assert main(["run", good, "--horizon", "20", "--dt", "0.001", "--out", str(tmp_path / "out")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["final_goal_distance"] < 1e-3
    # assertion failure on a short horizon
    assert main(["run", good, "--horizon", "1"]) == 4
    # schema error
    assert main(["run", write(tmp_path, "{]", "bad.json")]) == 2
    # simulation abort: start inside an obstacle
    inside = attractor_dict(tasks=[{"type": "damping"}, {"type": "obstacle", "center_latlon_deg": [-30.0, 0.0],
                                                          "radius": 0.1}])
    assert main(["run", write(tmp_path, inside, "inside.json")]) == 3


def test_cli_deterministic_csv(tmp_path):
    path = write(tmp_path, attractor_dict())
    for k in range(2):
        assert main(["run", path, "--out", str(tmp_path / f"o{k}"), "--seed", "3"]) in (0, 4)
    a = (tmp_path / "o0" / "mini_pbds_run0.csv").read_bytes()
    b = (tmp_path / "o1" / "mini_pbds_run0.csv").read_bytes()
    assert a == b


def test_cli_consistency_compare_bench(tmp_path, capsys):
    path = write(tmp_path, attractor_dict())
    assert main(["consistency", path, "--horizon", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True
    assert main(["compare-gds", path, "--horizon", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ratio"] >= 100
    assert main(["bench", "sphere_obstacles", "--iters", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["iterations"] == 0
    euclid = write(tmp_path, attractor_dict(manifold={"kind": "euclidean", "dim": 2},
                                            tasks=[{"type": "attractor", "goal": [1.0, 1.0]}],
                                            initial={"position": [0.0, 0.0]}), "flat.json")
    assert main(["consistency", euclid]) == 2
