"""Chart-aware integration of the policy ODE and trajectory diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._compiled import CollisionError
from ._kernels import stereo_chart, stereo_embedding
from .manifolds import ChartPoint, ChartScheme, Manifold, Product, Sphere, TangentState

LYAPUNOV_STEP_TOL = 1e-8
STRICT_SPEED = 1e-3


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings (``T`` is the horizon in seconds)."""

    dt: float = 1e-3
    T: float = 20.0
    method: str = "rk4"
    chart_scheme: ChartScheme = field(default_factory=ChartScheme.hemisphere)
    velocity_stop_eps: float = 1e-4

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be > 0")
        if not self.T > self.dt:
            raise ValueError("horizon T must exceed dt")
        if self.method not in ("rk4", "euler"):
            raise ValueError("method must be 'rk4' or 'euler'")
        if isinstance(self.chart_scheme, str):
            object.__setattr__(self, "chart_scheme", ChartScheme.parse(self.chart_scheme))

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class Trajectory:
    """Uniformly sampled states in chart and embedded coordinates.

    Arrays have one row per recorded sample; ``aborted`` holds the reason when
    integration stopped early.
    """

    times: np.ndarray
    charts: np.ndarray
    coords: np.ndarray
    velocities: np.ndarray
    embedded: np.ndarray
    embedded_velocities: np.ndarray
    lyapunov: np.ndarray
    chart_switches: int = 0
    aborted: str | None = None

    def __len__(self):
        return self.times.shape[0]

    @property
    def chart_states(self) -> list:
        return [
            TangentState(ChartPoint(int(c), x), v)
            for c, x, v in zip(self.charts, self.coords, self.velocities)
        ]

    @property
    def final_state(self) -> TangentState:
        return TangentState(ChartPoint(int(self.charts[-1]), self.coords[-1]), self.velocities[-1])

    @property
    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.embedded_velocities, axis=1)


def _retract(manifold: Manifold, chart: int, x: np.ndarray):
    """Embedding round trip: returns chart coords re-derived from the
    normalized embedded point, and that point."""
    if isinstance(manifold, Sphere):
        sign = 1.0 if chart == 0 else -1.0
        y = stereo_embedding(x, sign)[0]
        y = y / np.linalg.norm(y)
        return stereo_chart(y, sign), y
    y = manifold.embed(chart, x)[0]
    if isinstance(manifold, Product):
        e = manifold.project(y)
        return manifold._from_embedding(e, chart), e
    return x, y


def _next_chart(manifold: Manifold, e, current: int, scheme: ChartScheme) -> int:
    if scheme.kind == "fixed":
        return scheme.chart
    if isinstance(manifold, Product):
        charts = [
            _next_chart(f, ei, ci, scheme)
            for f, ei, ci in zip(manifold.factors, manifold.split_embedded(e), manifold.decode_chart(current))
        ]
        return manifold.encode_chart(charts)
    if not isinstance(manifold, Sphere):
        return 0
    h = scheme.hysteresis
    if current == 0 and e[-1] < -h:
        return 1
    if current == 1 and e[-1] > h:
        return 0
    return current


def initial_chart_state(manifold: Manifold, e, ydot, scheme: ChartScheme) -> TangentState:
    """Chart state from an embedded position and an ambient velocity (projected
    onto the tangent space by least squares)."""
    e = manifold.project(e)
    chart = manifold.select_chart(e, scheme)
    p = manifold.embedding_to_chart(e, chart)
    _, J, _ = manifold.embed(p.chart, p.coords)
    v, *_ = np.linalg.lstsq(J, np.asarray(ydot, dtype=float), rcond=None)
    return TangentState(p, v)


def _generic_rk4(accel, chart, x, v, dt):
    def a(xx, vv):
        return accel(ChartPoint(chart, xx), vv)

    a1 = a(x, v)
    x2, v2 = x + 0.5 * dt * v, v + 0.5 * dt * a1
    a2 = a(x2, v2)
    x3, v3 = x + 0.5 * dt * v2, v + 0.5 * dt * a2
    a3 = a(x3, v3)
    x4, v4 = x + dt * v3, v + dt * a3
    a4 = a(x4, v4)
    return (x + dt / 6.0 * (v + 2 * v2 + 2 * v3 + v4),
            v + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4))


def integrate(policy, initial: TangentState, cfg: IntegratorConfig) -> Trajectory:
    """Integrate ``policy`` (an :class:`pbds.engine.Policy`) from ``initial``.

    Stages of a step stay in one chart; chart changes requested by the scheme
    are applied between steps, together with the embedding round trip.
    """
    manifold = policy.manifold
    scheme = cfg.chart_scheme
    n = cfg.steps + 1
    m = manifold.dimension
    d = manifold.embedding_dimension
    times = np.arange(n) * cfg.dt
    charts = np.zeros(n, dtype=np.int64)
    X = np.zeros((n, m))
    Vs = np.zeros((n, m))
    E = np.zeros((n, d))
    Ed = np.zeros((n, d))
    L = np.zeros(n)

    p = initial.point
    manifold.validate(p)
    v = initial.velocity.copy()
    e0 = manifold.chart_to_embedding(p)
    if scheme.kind == "fixed":
        target = scheme.chart
    else:
        target = manifold.select_chart(e0, scheme)
    state = manifold.transition_tangent(TangentState(p, v), target) if target != p.chart else initial
    chart, x, v = state.point.chart, state.point.coords.copy(), state.velocity.copy()
    x, e = _retract(manifold, chart, x)

    fast = policy.compiled if cfg.method == "rk4" else None
    switches = 0
    aborted = None
    last = n - 1
    for i in range(n):
        _, J, _ = manifold.embed(chart, x)
        charts[i], X[i], Vs[i], E[i], Ed[i] = chart, x, v, e, J @ v
        try:
            L[i] = policy.lyapunov(ChartPoint(chart, x), v)
        except (ValueError, FloatingPointError) as exc:
            aborted, last = f"lyapunov evaluation failed: {exc}", i
            break
        if i == n - 1:
            break
        try:
            if fast is not None:
                xn, vn = fast.step(chart, x, v, cfg.dt)
                if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(vn))):
                    # locate the cause with a checked evaluation
                    policy.acceleration(ChartPoint(chart, x), v)
                    raise FloatingPointError("non-finite state after step")
            elif cfg.method == "rk4":
                xn, vn = _generic_rk4(policy.acceleration, chart, x, v, cfg.dt)
            else:
                a = policy.acceleration(ChartPoint(chart, x), v)
                xn, vn = x + cfg.dt * v, v + cfg.dt * a
            if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(vn))):
                raise FloatingPointError("non-finite state after step")
            xn, e = _retract(manifold, chart, xn)
            new = _next_chart(manifold, e, chart, scheme)
            if new != chart:
                s = manifold.transition_tangent(TangentState(ChartPoint(chart, xn), vn), new)
                chart, xn, vn = new, s.point.coords, s.velocity
                xn, e = _retract(manifold, chart, xn)
                switches += 1
            x, v = xn, vn
        except CollisionError as exc:
            aborted, last = f"collision: {exc}", i
            break
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            aborted, last = f"{type(exc).__name__}: {exc}", i
            break
    k = last + 1
    return Trajectory(times[:k], charts[:k], X[:k], Vs[:k], E[:k], Ed[:k], L[:k], switches, aborted)


def lyapunov_value(tasks, p: ChartPoint, v) -> float:
    """``sum_i 1/2 |Jf_i v|^2_{g_i} + Phi_i(f_i(p))``."""
    v = np.asarray(v, dtype=float)
    total = 0.0
    for t in tasks:
        y, J, _ = t.map.evaluate(p, v)
        ydot = J @ v
        with np.errstate(over="ignore"):
            total += 0.5 * float(ydot @ t.metric.matrix(y) @ ydot)
        total += float(t.potential.value(y))
    return total


@dataclass
class LyapunovReport:
    violations: int
    strict_failures: int
    max_increase: float


def lyapunov_report(traj: Trajectory, tol: float = LYAPUNOV_STEP_TOL, speed: float = STRICT_SPEED) -> LyapunovReport:
    """Per-step increases above ``tol`` and non-decreasing steps taken while
    the embedded speed exceeds ``speed``."""
    if len(traj) < 2:
        return LyapunovReport(0, 0, 0.0)
    with np.errstate(invalid="ignore"):
        dV = np.diff(traj.lyapunov)
    # an overflowed V certifies nothing, so those steps count as increases
    dV[np.isnan(dV)] = np.inf
    fast = traj.speeds[:-1] > speed
    return LyapunovReport(
        int(np.sum(dV > tol)),
        int(np.sum(fast & (dV >= 0.0))),
        float(np.max(dV)),
    )


@dataclass
class ConvergenceReport:
    converged: bool
    velocity_ok: bool
    gradient_ok: bool
    max_tail_speed: float
    max_tail_gradient: float
    lyapunov: LyapunovReport


def check_convergence(traj: Trajectory, tasks, tail_fraction: float = 0.1, velocity_stop_eps: float = 1e-4,
                      gradient_tol: float = 1e-6) -> ConvergenceReport:
    """Equilibrium test over the trajectory tail.

    Speeds are measured in the embedding.  A task counts when its weight at
    ``(p, 0)`` is nonzero; its ``|g^-1 grad Phi|`` must be below
    ``gradient_tol``.
    """
    n = len(traj)
    if n == 0:
        raise ValueError("empty trajectory")
    start = min(n - 1, int(np.floor(n * (1.0 - tail_fraction))))
    speeds = traj.speeds[start:]
    max_speed = float(np.max(speeds))
    max_grad = 0.0
    for c, x in zip(traj.charts[start:], traj.coords[start:]):
        p = ChartPoint(int(c), x)
        zero = np.zeros_like(x)
        for t in tasks:
            q = _rest_gradient(t, p, zero)
            if q is None:
                continue
            max_grad = max(max_grad, q)
    vel_ok = max_speed < velocity_stop_eps
    grad_ok = max_grad < gradient_tol
    lrep = lyapunov_report(traj)
    return ConvergenceReport(
        bool(vel_ok and grad_ok and traj.aborted is None), bool(vel_ok), bool(grad_ok), max_speed, max_grad, lrep
    )


def _rest_gradient(task, p: ChartPoint, zero) -> float | None:
    """``|g^-1 grad Phi|`` of a task with nonzero weight at ``(p, 0)``, else None."""
    y, J, _ = task.map.evaluate(p, zero)
    if not np.any(task.weight(y, J @ zero)):
        return None
    return float(np.linalg.norm(task.metric.inverse(y) @ task.potential.gradient(y)))


def trajectory_deviation(t1: Trajectory, t2: Trajectory) -> float:
    """Largest embedded distance between two runs on the same time grid."""
    if len(t1) != len(t2) or not np.allclose(t1.times, t2.times, rtol=0.0, atol=1e-12):
        raise ValueError("trajectories are not on the same time grid")
    return float(np.max(np.linalg.norm(t1.embedded - t2.embedded, axis=1)))


def write_csv(traj: Trajectory, path) -> None:
    """Columns ``t, chart_id, q1..qm, v1..vm, e1..ed, V``."""
    m = traj.coords.shape[1]
    d = traj.embedded.shape[1]
    header = (["t", "chart_id"] + [f"q{i + 1}" for i in range(m)] + [f"v{i + 1}" for i in range(m)]
              + [f"e{i + 1}" for i in range(d)] + ["V"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(traj)):
            row = [repr(float(traj.times[i])), str(int(traj.charts[i]))]
            row += [repr(float(z)) for z in traj.coords[i]]
            row += [repr(float(z)) for z in traj.velocities[i]]
            row += [repr(float(z)) for z in traj.embedded[i]]
            row.append(repr(float(traj.lyapunov[i])))
            w.writerow(row)
