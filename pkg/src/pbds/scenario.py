"""JSON scenarios: loading, running, chart-consistency runs and benchmarks."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ._compiled import CollisionError
from .engine import Policy
from .manifolds import ChartPoint, ChartScheme, Manifold, Sphere, manifold_from_descriptor
from .policy import combine
from .simulator import (
    IntegratorConfig,
    Trajectory,
    check_convergence,
    initial_chart_state,
    integrate,
    lyapunov_report,
    trajectory_deviation,
    write_csv,
)
from .tasks import BarrierParams, make_attractor_task, make_damping_task, make_obstacle_task
from .tree import evaluate_tree

CONSISTENCY_BOUND = 1e-6
SCHEMES = ("south", "north", "hemisphere")


class ScenarioError(ValueError):
    """Malformed scenario file (schema or value error)."""


class AssertionFailure(RuntimeError):
    """A scenario's embedded assertion did not hold."""


_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_LATLON = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "required": ["manifold", "tasks", "initial"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "manifold": {"type": "object", "required": ["kind"]},
        "tasks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["type"],
                "properties": {
                    "type": {"enum": ["attractor", "damping", "obstacle"]},
                    "goal": _VEC,
                    "goal_latlon_deg": _LATLON,
                    "c": {"type": "number", "exclusiveMinimum": 0},
                    "center": _VEC,
                    "center_latlon_deg": _LATLON,
                    "radius": {"type": "number", "minimum": 0},
                    "a": {"type": "number", "exclusiveMinimum": 0},
                    "b": {"type": "number", "exclusiveMinimum": 1},
                    "beta": {"type": ["number", "null"], "exclusiveMinimum": 0},
                    "smooth": {"type": "boolean"},
                },
            },
        },
        "initial": {
            "type": "object",
            "properties": {
                "position": _VEC,
                "position_latlon_deg": _LATLON,
                "velocity": _VEC,
                "velocities": {"type": "array", "items": _VEC},
                "velocity_directions_deg": {"type": "array", "items": {"type": "number"}},
                "speed": {"type": "number", "minimum": 0},
                "random_directions": {"type": "integer", "minimum": 0},
            },
        },
        "integrator": {
            "type": "object",
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["rk4", "euler"]},
                "chart_scheme": {"type": "string"},
                "velocity_stop_eps": {"type": "number", "minimum": 0},
            },
        },
        "engine": {"enum": ["pbds", "pbds_tree", "gds"]},
        "seed": {"type": "integer"},
        "assertions": {
            "type": "object",
            "properties": {
                "final_goal_distance": {"type": "number"},
                "min_obstacle_distance": {"type": "number"},
                "consistency_bound": {"type": "number"},
                "converged": {"type": "boolean"},
            },
        },
    },
}


def latlon(lat_deg: float, lon_deg: float) -> np.ndarray:
    """Unit vector at the given latitude and longitude (degrees)."""
    lat, lon = np.radians(lat_deg), np.radians(lon_deg)
    return np.array([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def east_north(e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Local east and north unit tangents of S^2 at ``e`` (not at the poles)."""
    r = np.hypot(e[0], e[1])
    if r < 1e-12:
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    east = np.array([-e[1], e[0], 0.0]) / r
    return east, np.cross(e, east)


@dataclass
class Scenario:
    name: str
    manifold: Manifold
    tasks: list
    task_specs: list
    starts: list  # (embedded position, ambient velocity) pairs
    config: IntegratorConfig
    engine: str = "pbds"
    seed: int = 0
    assertions: dict = field(default_factory=dict)

    @property
    def goal_task(self):
        for t, s in zip(self.tasks, self.task_specs):
            if s["type"] == "attractor":
                return t
        return None

    @property
    def obstacles(self) -> list:
        """``(center, radius)`` of every obstacle task."""
        return [(t.kernel[2], t.kernel[1][0]) for t in self.tasks if t.kernel and t.kernel[0] == "obstacle"]


def _point(spec: dict, key: str, manifold: Manifold, where: str) -> np.ndarray:
    if key in spec:
        e = np.asarray(spec[key], dtype=float)
    elif f"{key}_latlon_deg" in spec:
        if not isinstance(manifold, Sphere) or manifold.dimension != 2:
            raise ScenarioError(f"{where}: latitude/longitude only valid on sphere2")
        e = latlon(*spec[f"{key}_latlon_deg"])
    else:
        raise ScenarioError(f"{where}: missing '{key}' or '{key}_latlon_deg'")
    if e.shape != (manifold.embedding_dimension,):
        raise ScenarioError(f"{where}.{key}: expected {manifold.embedding_dimension} components")
    return e


def _build_task(spec: dict, manifold: Manifold, where: str):
    kind = spec["type"]
    try:
        if kind == "attractor":
            return make_attractor_task(manifold.project(_point(spec, "goal", manifold, where)), manifold)
        if kind == "damping":
            return make_damping_task(manifold, float(spec.get("c", 4.0)))
        beta = spec.get("beta")
        params = BarrierParams(
            float(spec.get("a", 2.0)), float(spec.get("b", 2.0)), np.inf if beta is None else float(beta)
        )
        center = _point(spec, "center", manifold, where)
        if "radius" not in spec:
            raise ScenarioError(f"{where}: obstacle needs 'radius'")
        return make_obstacle_task(manifold, center, float(spec["radius"]), params, bool(spec.get("smooth", False)))
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def _starts(spec: dict, manifold: Manifold, seed: int) -> list:
    e = manifold.project(_point(spec, "position", manifold, "initial"))
    d = manifold.embedding_dimension
    vels = []
    if "velocity" in spec:
        vels.append(np.asarray(spec["velocity"], dtype=float))
    for u in spec.get("velocities", []):
        vels.append(np.asarray(u, dtype=float))
    speed = float(spec.get("speed", 1.0))
    if spec.get("velocity_directions_deg") or spec.get("random_directions"):
        if not (isinstance(manifold, Sphere) and manifold.dimension == 2):
            raise ScenarioError("initial: velocity directions only valid on sphere2")
        east, north = east_north(e)
        angles = [np.radians(a) for a in spec.get("velocity_directions_deg", [])]
        rng = np.random.default_rng(seed)
        angles += list(rng.uniform(0.0, 2 * np.pi, int(spec.get("random_directions", 0))))
        vels += [speed * (np.cos(a) * east + np.sin(a) * north) for a in angles]
    if not vels:
        vels.append(np.zeros(d))
    for i, u in enumerate(vels):
        if u.shape != (d,):
            raise ScenarioError(f"initial.velocities[{i}]: expected {d} components")
    return [(e, u) for u in vels]


def load_scenario(source) -> Scenario:
    """Scenario from a path, a bundled scenario name or a parsed dict."""
    if isinstance(source, dict):
        data, label = source, source.get("name", "scenario")
    else:
        path = Path(source)
        if not path.exists():
            bundled = bundled_scenario_path(str(source))
            if bundled is None:
                raise ScenarioError(f"scenario file not found: {source}")
            path = bundled
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        label = path.stem
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(k) for k in exc.absolute_path) or "<root>"
        raise ScenarioError(f"schema error at {loc}: {exc.message}") from exc
    try:
        manifold = manifold_from_descriptor(data["manifold"])
    except (ValueError, KeyError) as exc:
        raise ScenarioError(f"manifold: {exc}") from exc
    tasks = [_build_task(s, manifold, f"tasks[{i}]") for i, s in enumerate(data["tasks"])]
    seed = int(data.get("seed", 0))
    integ = dict(data.get("integrator", {}))
    try:
        cfg = IntegratorConfig(
            float(integ.get("dt", 1e-3)),
            float(integ.get("T", 20.0)),
            integ.get("method", "rk4"),
            ChartScheme.parse(integ.get("chart_scheme", "hemisphere")),
            float(integ.get("velocity_stop_eps", 1e-4)),
        )
        starts = _starts(data["initial"], manifold, seed)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"integrator/initial: {exc}") from exc
    return Scenario(
        data.get("name", label), manifold, tasks, list(data["tasks"]), starts, cfg,
        data.get("engine", "pbds"), seed, dict(data.get("assertions", {})),
    )


def bundled_scenario_path(name: str) -> Path | None:
    fname = name if name.endswith(".json") else f"{name}.json"
    ref = resources.files("pbds") / "scenarios" / Path(fname).name
    return Path(str(ref)) if ref.is_file() else None


def bundled_scenarios() -> list:
    return sorted(str(p) for p in Path(str(resources.files("pbds") / "scenarios")).glob("*.json"))


# -- running -------------------------------------------------------------------

@dataclass
class RunReport:
    final_goal_distance: float
    min_obstacle_distance: float | None
    lyapunov_violations: int
    evals_per_second: float
    converged: bool
    eval_mean_seconds: float = 0.0
    eval_p99_seconds: float = 0.0
    min_obstacle_distances: list = field(default_factory=list)
    runs: list = field(default_factory=list)
    aborted: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "final_goal_distance": self.final_goal_distance,
            "min_obstacle_distance": self.min_obstacle_distance,
            "lyapunov_violations": self.lyapunov_violations,
            "evals_per_second": self.evals_per_second,
            "converged": self.converged,
            "eval_mean_seconds": self.eval_mean_seconds,
            "eval_p99_seconds": self.eval_p99_seconds,
            "min_obstacle_distances": self.min_obstacle_distances,
            "runs": self.runs,
            "aborted": self.aborted,
        }


def goal_distance(scn: Scenario, traj: Trajectory) -> float:
    t = scn.goal_task
    if t is None:
        return float("nan")
    p = traj.final_state.point
    return float(t.map.value(p).coords[0])


def obstacle_distances(scn: Scenario, traj: Trajectory) -> list:
    """Minimum clearance to each obstacle over the trajectory."""
    return [float(np.min(np.linalg.norm(traj.embedded - c, axis=1) - r)) for c, r in scn.obstacles]


def _time_evals(policy: Policy, traj: Trajectory, count: int = 200) -> tuple[float, float]:
    idx = np.linspace(0, len(traj) - 1, min(count, len(traj))).astype(int)
    samples = []
    for i in idx:
        p = ChartPoint(int(traj.charts[i]), traj.coords[i])
        v = traj.velocities[i]
        try:
            policy.acceleration(p, v)  # warm-up, and skips states an aborted run stopped at
        except (CollisionError, ValueError, FloatingPointError):
            continue
        t0 = time.perf_counter()
        policy.acceleration(p, v)
        samples.append(time.perf_counter() - t0)
    if not samples:
        return 0.0, 0.0
    s = np.asarray(samples)
    return float(s.mean()), float(np.percentile(s, 99))


def simulate(scn: Scenario, engine: str | None = None, scheme: ChartScheme | str | None = None,
             compiled: bool = True) -> list:
    """Integrate every start of the scenario; returns the trajectories."""
    engine = engine or scn.engine
    cfg = scn.config
    if scheme is not None:
        cfg = IntegratorConfig(cfg.dt, cfg.T, cfg.method, ChartScheme.parse(scheme) if isinstance(scheme, str)
                               else scheme, cfg.velocity_stop_eps)
    policy = Policy(scn.tasks, scn.manifold, engine, compiled=compiled)
    out = []
    for e, u in scn.starts:
        init = initial_chart_state(scn.manifold, e, u, cfg.chart_scheme)
        if engine == "pbds_tree":
            a_tree = policy.evaluate(init.point, init.velocity).acceleration
            a_flat = combine(scn.tasks, init.point, init.velocity).acceleration
            err = float(np.max(np.abs(a_tree - a_flat)))
            if err > 1e-10:
                raise AssertionFailure(f"tree and flat policies disagree by {err:.3e} on the first step")
        out.append(integrate(policy, init, cfg))
    return out


def run(scn: Scenario, out_dir=None, engine: str | None = None) -> tuple[RunReport, list]:
    """Integrate all starts, write CSV/JSON when ``out_dir`` is given."""
    engine = engine or scn.engine
    t0 = time.perf_counter()
    trajs = simulate(scn, engine)
    wall = time.perf_counter() - t0
    policy = Policy(scn.tasks, scn.manifold, engine)
    evals = sum(4 * (len(t) - 1) for t in trajs)
    goal = [goal_distance(scn, t) for t in trajs]
    per_obs = [obstacle_distances(scn, t) for t in trajs]
    obs_min = [min(col) for col in zip(*per_obs)] if scn.obstacles else []
    runs, aborted, violations, converged = [], [], 0, True
    for i, t in enumerate(trajs):
        conv = check_convergence(t, scn.tasks, velocity_stop_eps=scn.config.velocity_stop_eps)
        lrep = lyapunov_report(t)
        violations += lrep.violations
        converged &= conv.converged
        if t.aborted:
            aborted.append({"run": i, "reason": t.aborted})
        runs.append({
            "run": i,
            "final_goal_distance": goal[i],
            "min_obstacle_distance": min(per_obs[i]) if per_obs[i] else None,
            "lyapunov_violations": lrep.violations,
            "lyapunov_strict_failures": lrep.strict_failures,
            "converged": conv.converged,
            "chart_switches": t.chart_switches,
            "samples": len(t),
        })
    mean, p99 = _time_evals(policy, trajs[0])
    report = RunReport(
        float(np.max(goal)),
        float(min(obs_min)) if obs_min else None,
        int(violations),
        evals / wall if wall > 0 else float("inf"),
        bool(converged),
        mean,
        p99,
        obs_min,
        runs,
        aborted,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, t in enumerate(trajs):
            write_csv(t, out / f"{scn.name}_{engine}_run{i}.csv")
        (out / f"{scn.name}_{engine}_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    return report, trajs


def check_assertions(scn: Scenario, report: RunReport) -> list:
    """Messages for every failed scenario assertion."""
    a = scn.assertions
    fails = []
    if "final_goal_distance" in a and not report.final_goal_distance < a["final_goal_distance"]:
        fails.append(f"final goal distance {report.final_goal_distance:.3e} >= {a['final_goal_distance']}")
    if "min_obstacle_distance" in a and report.min_obstacle_distance is not None:
        if not report.min_obstacle_distance > a["min_obstacle_distance"]:
            fails.append(f"min obstacle distance {report.min_obstacle_distance:.3e} <= {a['min_obstacle_distance']}")
    if a.get("converged") and not report.converged:
        fails.append("not all runs converged")
    return fails


# -- consistency ---------------------------------------------------------------

@dataclass
class ConsistencyReport:
    engine: str
    deviations: dict
    max_deviation: float
    bound: float
    passed: bool | None

    def to_dict(self) -> dict:
        return {
            "engine": self.engine,
            "deviations": self.deviations,
            "max_deviation": self.max_deviation,
            "bound": self.bound,
            "passed": self.passed,
        }


def consistency_test(scn: Scenario, engine: str | None = None, bound: float | None = None) -> ConsistencyReport:
    """Run under fixed-south, fixed-north and hemisphere schemes and compare.

    The bound is enforced only for the PBDS engines; for GDS the deviation is
    reported.
    """
    if scn.manifold.chart_count < 2:
        raise ScenarioError("consistency test needs a manifold with several charts")
    engine = engine or scn.engine
    bound = scn.assertions.get("consistency_bound", CONSISTENCY_BOUND) if bound is None else bound
    runs = {s: simulate(scn, engine, s) for s in SCHEMES}
    for s, trajs in runs.items():
        for t in trajs:
            if t.aborted:
                raise RuntimeError(f"{s} run aborted: {t.aborted}")
    dev = {}
    for i, a in enumerate(SCHEMES):
        for b in SCHEMES[i + 1:]:
            dev[f"{a}-{b}"] = max(trajectory_deviation(x, y) for x, y in zip(runs[a], runs[b]))
    worst = max(dev.values())
    passed = None if engine == "gds" else bool(worst < bound)
    return ConsistencyReport(engine, dev, worst, bound, passed)


# -- benchmark -----------------------------------------------------------------

def random_states(scn: Scenario, count: int, seed: int = 0, clearance: float = 0.05) -> list:
    """Random tangent states away from obstacles and the goal's antipode."""
    rng = np.random.default_rng(seed)
    man = scn.manifold
    goal = scn.goal_task.kernel[2] if scn.goal_task is not None else None
    out = []
    while len(out) < count:
        e = rng.normal(size=man.embedding_dimension)
        if isinstance(man, Sphere):
            e /= np.linalg.norm(e)
            if goal is not None and e @ goal < -0.99:
                continue
        if any(np.linalg.norm(e - c) - r < clearance for c, r in scn.obstacles):
            continue
        p = man.embedding_to_chart(e)
        out.append((p, rng.normal(size=man.dimension)))
    return out


@dataclass
class BenchReport:
    iterations: int
    evals_per_second: float = 0.0
    mean_seconds: float = 0.0
    p99_seconds: float = 0.0
    generic_flat_seconds: float = 0.0
    tree_single_level_seconds: float = 0.0
    tree_embedding_seconds: float = 0.0
    tree_single_ratio: float = 0.0
    tree_embedding_ratio: float = 0.0
    tree_max_difference: float = 0.0
    compiled: bool = False
    task_count: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def bench(scn: Scenario, iterations: int, seed: int = 0, generic_samples: int = 500) -> BenchReport:
    """Policy-only timing at random states (no integration).

    The compiled flat engine gives the throughput figures; the generic flat
    engine is compared with the tree engine on a single-level tree (tasks
    under the root) and on the shared-embedding tree.
    """
    if iterations <= 0:
        return BenchReport(0, task_count=len(scn.tasks))
    states = random_states(scn, iterations, seed)
    flat = Policy(scn.tasks, scn.manifold, "pbds")
    rep = BenchReport(iterations, compiled=flat.compiled is not None, task_count=len(scn.tasks))
    for p, v in states[: min(10, iterations)]:
        flat.acceleration(p, v)  # warm-up
    samples = np.empty(iterations)
    t_all = time.perf_counter()
    for i, (p, v) in enumerate(states):
        t0 = time.perf_counter()
        flat.acceleration(p, v)
        samples[i] = time.perf_counter() - t0
    total = time.perf_counter() - t_all
    rep.evals_per_second = iterations / total
    rep.mean_seconds = float(samples.mean())
    rep.p99_seconds = float(np.percentile(samples, 99))

    sub = states[: min(generic_samples, iterations)]
    tree = Policy(scn.tasks, scn.manifold, "pbds_tree").tree

    def timed(fn):
        outs = []
        t0 = time.perf_counter()
        for p, v in sub:
            outs.append(fn(p, v))
        return (time.perf_counter() - t0) / len(sub), np.array(outs)

    t_flat, a_flat = timed(lambda p, v: combine(scn.tasks, p, v).acceleration)
    t_single, a_single = timed(lambda p, v: evaluate_tree(scn.tasks, p, v).acceleration)
    t_emb, a_emb = timed(lambda p, v: evaluate_tree(tree, p, v).acceleration)
    rep.generic_flat_seconds = t_flat
    rep.tree_single_level_seconds = t_single
    rep.tree_embedding_seconds = t_emb
    rep.tree_single_ratio = t_single / t_flat
    rep.tree_embedding_ratio = t_emb / t_flat
    scale = max(1.0, float(np.max(np.abs(a_flat))))
    rep.tree_max_difference = float(max(np.max(np.abs(a_single - a_flat)), np.max(np.abs(a_emb - a_flat))) / scale)
    return rep
