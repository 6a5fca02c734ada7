"""Task maps, task specifications and the standard task families."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ._kernels import euclidean_distance, geodesic_distance
from .manifolds import ChartPoint, Euclidean, Manifold, PositiveReals, Product, Sphere, TangentState
from .riemannian import (
    AmbientComponents,
    BarrierMetric,
    ConstantMetric,
    Metric,
    Potential,
    ProductMetric,
    QuadraticPotential,
    ZeroPotential,
    constant_weight,
    linear_damping,
    pullback_through_embedding,
    zero_force,
)

FD_STEP = 1e-6
FD_SECOND_STEP = 1e-4


# -- task maps -----------------------------------------------------------------

class TaskMap:
    """Smooth map between manifolds, evaluated in charts.

    Subclasses implement :meth:`value`; Jacobians and their time derivatives
    fall back to central finite differences.
    """

    def __init__(self, domain: Manifold, codomain: Manifold):
        self.domain = domain
        self.codomain = codomain

    def value(self, p: ChartPoint) -> ChartPoint:
        raise NotImplementedError

    def __call__(self, p: ChartPoint) -> ChartPoint:
        return self.value(p)

    def _coords_in(self, p: ChartPoint, chart: int) -> np.ndarray:
        y = self.value(p)
        if y.chart != chart:
            y = self.codomain.chart_transition(y, chart)
        return y.coords

    def jacobian(self, p: ChartPoint) -> np.ndarray:
        """``J[j, k] = d f^j / d x^k`` by central differences."""
        chart = self.value(p).chart
        x = p.coords
        cols = []
        for k in range(x.shape[0]):
            e = np.zeros_like(x)
            e[k] = FD_STEP
            fp = self._coords_in(ChartPoint(p.chart, x + e), chart)
            fm = self._coords_in(ChartPoint(p.chart, x - e), chart)
            cols.append((fp - fm) / (2 * FD_STEP))
        return np.column_stack(cols)

    def jacobian_dot(self, p: ChartPoint, v) -> np.ndarray:
        """Time derivative of the Jacobian along a curve with velocity ``v``."""
        v = np.asarray(v, dtype=float)
        chart = self.value(p).chart
        x = p.coords
        vmax = float(np.max(np.abs(v))) if v.size else 0.0
        if vmax == 0.0:
            return np.zeros((self.codomain.dimension, x.shape[0]))
        # one mixed second difference at a coarser step; nesting two
        # first differences at FD_STEP would leave ~1e-4 rounding error
        h = FD_SECOND_STEP
        t = h / vmax
        cols = []
        for k in range(x.shape[0]):
            e = np.zeros_like(x)
            e[k] = h
            f = [self._coords_in(ChartPoint(p.chart, x + s1 * t * v + s2 * e), chart)
                 for s1, s2 in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
            cols.append((f[0] - f[1] - f[2] + f[3]) / (4 * h * t))
        return np.column_stack(cols)

    def evaluate(self, p: ChartPoint, v):
        """``(f(p), Jf(p), Jf_dot(p, v))`` in one pass."""
        return self.value(p), self.jacobian(p), self.jacobian_dot(p, v)


def jacobian_dot(f: TaskMap, p: ChartPoint, v) -> np.ndarray:
    return f.jacobian_dot(p, v)


class FunctionMap(TaskMap):
    """Map given by callables on coordinates; the image is in codomain chart 0
    unless ``chart_of`` says otherwise."""

    def __init__(self, domain, codomain, fn, jacobian=None, jacobian_dot=None, chart_of=None):
        super().__init__(domain, codomain)
        self._fn = fn
        self._jac = jacobian
        self._jdot = jacobian_dot
        self._chart_of = chart_of

    def value(self, p):
        chart = 0 if self._chart_of is None else self._chart_of(p)
        return ChartPoint(chart, np.atleast_1d(np.asarray(self._fn(p.coords), dtype=float)))

    def jacobian(self, p):
        if self._jac is None:
            return super().jacobian(p)
        return np.atleast_2d(np.asarray(self._jac(p.coords), dtype=float))

    def jacobian_dot(self, p, v):
        if self._jdot is None:
            return super().jacobian_dot(p, v)
        return np.atleast_2d(np.asarray(self._jdot(p.coords, np.asarray(v, dtype=float)), dtype=float))


class IdentityMap(TaskMap):
    def __init__(self, manifold: Manifold):
        super().__init__(manifold, manifold)
        n = manifold.dimension
        self._eye = np.eye(n)
        self._zero = np.zeros((n, n))

    def value(self, p):
        return p

    def jacobian(self, p):
        return self._eye

    def jacobian_dot(self, p, v):
        return self._zero

    def evaluate(self, p, v):
        return p, self._eye, self._zero


class AmbientScalarMap(TaskMap):
    """``F o embed`` for a scalar ambient function ``F`` with analytic
    gradient and Hessian, given by ``kernel(y) -> (F, grad, hess)``."""

    def __init__(self, domain, codomain, kernel: Callable):
        super().__init__(domain, codomain)
        self._kernel = kernel

    def value(self, p):
        y, _, _ = self.domain.embed(p.chart, p.coords)
        return ChartPoint(0, np.array([self._kernel(y)[0]]))

    def jacobian(self, p):
        y, J, _ = self.domain.embed(p.chart, p.coords)
        _, grad, _ = self._kernel(y)
        return (grad @ J)[None, :]

    def jacobian_dot(self, p, v):
        return self.evaluate(p, v)[2]

    def evaluate(self, p, v):
        y, J, H = self.domain.embed(p.chart, p.coords)
        val, grad, hess = self._kernel(y)
        ydot = J @ v
        dJ = H @ v  # d/dt of the embedding Jacobian
        Jf = (grad @ J)[None, :]
        Jf_dot = ((hess @ ydot) @ J + grad @ dJ)[None, :]
        return ChartPoint(0, np.array([val])), Jf, Jf_dot


def geodesic_distance_map(on: Manifold, goal) -> AmbientScalarMap:
    """Distance to ``goal`` (embedded coordinates): great-circle on spheres,
    Euclidean on R^n."""
    goal = np.asarray(goal, dtype=float)
    if isinstance(on, Sphere):
        goal = on.project(goal)

        def kernel(y):
            return geodesic_distance(y, goal)
    elif isinstance(on, Euclidean):

        def kernel(y):
            return euclidean_distance(y, goal, 0.0)
    else:
        raise ValueError(f"no goal distance defined on {on!r}")
    return AmbientScalarMap(on, Euclidean(1), kernel)


def ball_distance_map(on: Manifold, center, radius: float) -> AmbientScalarMap:
    """Ambient Euclidean distance to a ball of given center and radius."""
    center = np.asarray(center, dtype=float)
    radius = float(radius)

    def kernel(y):
        return euclidean_distance(y, center, radius)

    return AmbientScalarMap(on, PositiveReals(), kernel)


class ComposedMap(TaskMap):
    """``outer o inner`` with chain-rule Jacobian and Jacobian derivative."""

    def __init__(self, outer: TaskMap, inner: TaskMap):
        super().__init__(inner.domain, outer.codomain)
        self.outer = outer
        self.inner = inner

    def value(self, p):
        return self.outer.value(self.inner.value(p))

    def jacobian(self, p):
        return self.outer.jacobian(self.inner.value(p)) @ self.inner.jacobian(p)

    def jacobian_dot(self, p, v):
        return self.evaluate(p, v)[2]

    def evaluate(self, p, v):
        y, Ji, Ji_dot = self.inner.evaluate(p, v)
        z, Jo, Jo_dot = self.outer.evaluate(y, Ji @ v)
        return z, Jo @ Ji, Jo_dot @ Ji + Jo @ Ji_dot


class ProductMap(TaskMap):
    """``p -> (f_1(p), ..., f_k(p))`` into the product of the codomains."""

    def __init__(self, maps):
        self.maps = list(maps)
        codomain = Product([m.codomain for m in self.maps])
        super().__init__(self.maps[0].domain, codomain)

    def value(self, p):
        return self.codomain.compose([m.value(p) for m in self.maps])

    def jacobian(self, p):
        return np.vstack([m.jacobian(p) for m in self.maps])

    def jacobian_dot(self, p, v):
        return np.vstack([m.jacobian_dot(p, v) for m in self.maps])

    def evaluate(self, p, v):
        parts = [m.evaluate(p, v) for m in self.maps]
        y = self.codomain.compose([q[0] for q in parts])
        return y, np.vstack([q[1] for q in parts]), np.vstack([q[2] for q in parts])


# -- task specification --------------------------------------------------------

@dataclass(frozen=True)
class BarrierParams:
    """Barrier metric ``exp(a / (b x^b))`` with activation radius ``beta``."""

    a: float = 1.0
    b: float = 2.0
    beta: float = np.inf

    def __post_init__(self):
        if not self.a > 0.0:
            raise ValueError("barrier parameter a must be > 0")
        if not self.b > 1.0:
            raise ValueError("barrier parameter b must be > 1")
        if not self.beta > 0.0:
            raise ValueError("activation radius beta must be > 0")


@dataclass(frozen=True)
class TaskSpec:
    """One task: map, behavior metric, potential, dissipative force and the
    operative block ``w^a`` of the weighting pseudometric.

    ``force(y, ydot)`` and ``weight(y, ydot)`` take a codomain
    :class:`ChartPoint` and the codomain velocity.
    """

    map: TaskMap
    metric: Metric
    potential: Potential = field(default_factory=ZeroPotential)
    force: Callable = zero_force
    weight: Callable | None = None
    name: str = ""
    # descriptor for the compiled policy path: (kind, float params, vector)
    kernel: tuple | None = None
    # equivalent leaf task on the ambient space, for embedding-rooted trees
    ambient_leaf: "TaskSpec | None" = None
    # velocity-block metric used by the GDS baseline (None: behavior metric)
    gds_block: object | None = None

    def __post_init__(self):
        if self.weight is None:
            n = self.map.codomain.dimension
            object.__setattr__(self, "weight", constant_weight(np.eye(n)))

    @property
    def domain(self) -> Manifold:
        return self.map.domain

    @property
    def codomain(self) -> Manifold:
        return self.map.codomain


def _as_embedded(goal, on: Manifold) -> np.ndarray:
    if isinstance(goal, ChartPoint):
        return on.chart_to_embedding(goal)
    return on.project(goal)


def make_attractor_task(goal, on: Manifold, name: str = "attractor") -> TaskSpec:
    """Goal attraction: distance-to-goal map, unit metric and weight,
    potential ``x^2`` and no dissipation."""
    goal = _as_embedded(goal, on)
    fmap = geodesic_distance_map(on, goal)
    leaf = TaskSpec(
        _ambient_extension(fmap, on.embedding_dimension),
        ConstantMetric([[1.0]]),
        QuadraticPotential(),
        name=name,
    )
    return TaskSpec(
        fmap,
        ConstantMetric([[1.0]]),
        QuadraticPotential(),
        name=name,
        kernel=("attractor", np.zeros(0), goal.copy()),
        ambient_leaf=leaf,
    )


def _ambient_extension(m: AmbientScalarMap, d: int) -> AmbientScalarMap:
    """Same kernel, evaluated on ambient coordinates directly."""
    return AmbientScalarMap(Euclidean(d), m.codomain, m._kernel)


def make_damping_task(on: Manifold, c: float = 4.0, name: str = "damping") -> TaskSpec:
    """Identity task with ambient metric ``I``, force ``-c xdot`` and weight
    ``I`` pulled back through the embedding."""
    if not c > 0.0:
        raise ValueError("damping coefficient must be > 0")
    from .gds import LiftedBlockMetric  # local import: gds builds on tasks

    d = on.embedding_dimension
    comps = pullback_through_embedding(
        AmbientComponents(np.eye(d), linear_damping(c), None, np.eye(d)), on
    )
    leaf = TaskSpec(
        IdentityMap(Euclidean(d)),
        ConstantMetric(np.eye(d)),
        ZeroPotential(),
        linear_damping(c),
        constant_weight(np.eye(d)),
        name=name,
    )
    return TaskSpec(
        IdentityMap(on),
        comps.metric,
        comps.potential,
        comps.force,
        comps.weight,
        name=name,
        kernel=("damping", np.array([float(c)]), np.zeros(0)),
        ambient_leaf=leaf,
        gds_block=LiftedBlockMetric(on, np.eye(d), np.eye(d)),
    )


def toggled_weight(params: BarrierParams, smooth: bool = False, eps: float = 1e-2) -> Callable:
    """Constraint weight: 1 while approaching (``xdot < 0``) within ``beta``."""
    beta = params.beta

    def weight(y, ydot):
        x = float(y.coords[0])
        xd = float(np.asarray(ydot).reshape(-1)[0])
        if smooth:
            near = 1.0 if np.isinf(beta) else _logistic((beta - x) / eps)
            return np.array([[_logistic(-xd / eps) * near]])
        return np.array([[1.0 if (xd < 0.0 and x < beta) else 0.0]])

    return weight


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def make_constraint_task(
    distance: TaskMap,
    params: BarrierParams = BarrierParams(),
    smooth: bool = False,
    name: str = "constraint",
) -> TaskSpec:
    """Metric-only constraint: barrier metric, no potential, no force."""
    return TaskSpec(
        distance,
        BarrierMetric(params.a, params.b),
        ZeroPotential(),
        zero_force,
        toggled_weight(params, smooth),
        name=name,
    )


def make_obstacle_task(
    on: Manifold,
    center,
    radius: float,
    params: BarrierParams = BarrierParams(2.0, 2.0),
    smooth: bool = False,
    name: str = "obstacle",
) -> TaskSpec:
    """Constraint task on the ambient distance to a ball obstacle."""
    center = np.asarray(center, dtype=float)
    d = on.embedding_dimension
    task = make_constraint_task(ball_distance_map(on, center, radius), params, smooth, name)
    leaf = make_constraint_task(ball_distance_map(Euclidean(d), center, radius), params, smooth, name)
    kparams = np.array([float(radius), params.a, params.b, params.beta, 1e-2 if smooth else 0.0])
    return replace(task, kernel=("obstacle", kparams, center.copy()), ambient_leaf=leaf)


def toggle_by_distance(task: TaskSpec, distance: TaskMap, predicate: Callable) -> TaskSpec:
    """Switch ``task`` on and off with ``predicate(d, d_dot)`` through the
    product map ``(f, distance)``; the extra factor carries no weight."""
    pmap = ProductMap([task.map, distance])
    cod = pmap.codomain
    n = task.codomain.dimension

    def split(y):
        return cod.split(y)

    metric = ProductMetric([task.metric, ConstantMetric([[1.0]])], split)

    class _Padded(Potential):
        def value(self, y):
            return task.potential.value(split(y)[0])

        def gradient(self, y):
            return np.append(task.potential.gradient(split(y)[0]), 0.0)

    def force(y, ydot):
        return np.append(task.force(split(y)[0], ydot[:n]), 0.0)

    def weight(y, ydot):
        parts = split(y)
        w = np.zeros((n + 1, n + 1))
        if predicate(float(parts[1].coords[0]), float(ydot[n])):
            w[:n, :n] = task.weight(parts[0], ydot[:n])
        return w

    return TaskSpec(pmap, metric, _Padded(), force, weight, name=f"{task.name}|toggled")


# -- assumption checks ---------------------------------------------------------

@dataclass
class AssumptionReport:
    """Per-state pass/fail of the weighting (A1), rank (A2) and strict
    dissipation (A3) conditions."""

    a1: list = field(default_factory=list)
    a2: list = field(default_factory=list)
    a3: list = field(default_factory=list)

    @property
    def passed(self) -> dict:
        return {"A1": all(self.a1), "A2": all(self.a2), "A3": all(self.a3)}

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def _pd_or_zero(w, tol=1e-10) -> tuple[bool, bool]:
    """``(ok, nonzero)`` for the A1 test."""
    if np.all(np.abs(w) <= tol):
        return True, False
    ev = np.linalg.eigvalsh(0.5 * (w + w.T))
    return bool(ev[0] > tol), True


def check_assumptions(tasks, states) -> AssumptionReport:
    report = AssumptionReport()
    for s in states:
        p, v = s.point, s.velocity
        m = p.coords.shape[0]
        a1 = True
        jacs = []
        power = 0.0
        for t in tasks:
            y, J, _ = t.map.evaluate(p, v)
            ydot = J @ v
            ok, nonzero = _pd_or_zero(t.weight(y, ydot))
            a1 &= ok
            if nonzero:
                jacs.append(J)
                power += float(t.force(y, ydot) @ ydot)
        if jacs:
            sv = np.linalg.svd(np.vstack(jacs), compute_uv=False)
            a2 = sv.shape[0] >= m and sv[m - 1] > 1e-8 * max(sv[0], 1e-300)
        else:
            a2 = False
        a3 = power < 0.0 if np.any(v) else True
        report.a1.append(bool(a1))
        report.a2.append(bool(a2))
        report.a3.append(bool(a3))
    return report
