"""Riemannian metrics, Levi-Civita symbols and pullbacks through embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._kernels import barrier_log_metric, christoffel_from_derivative
from .manifolds import ChartPoint, Manifold

COND_LIMIT = 1e12
FD_STEP = 1e-6


class SingularMetricError(ValueError):
    pass


class Metric:
    """Coordinate representation of a Riemannian metric on some manifold.

    Subclasses implement :meth:`matrix`; :meth:`derivative` defaults to
    central finite differences.
    """

    dimension: int

    def matrix(self, p: ChartPoint) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, p: ChartPoint) -> np.ndarray:
        """``dg[h, i, j] = d g_ij / d x^h``."""
        return finite_difference_metric_derivative(self, p)

    def inverse(self, p: ChartPoint) -> np.ndarray:
        return _checked_inverse(self.matrix(p))

    def christoffel(self, p: ChartPoint) -> np.ndarray:
        return christoffel_from_derivative(self.inverse(p), self.derivative(p))


def _checked_inverse(g: np.ndarray) -> np.ndarray:
    if g.shape == (1, 1):
        if not g[0, 0] > 0.0:
            raise SingularMetricError("metric is not positive-definite")
        return 1.0 / g
    if np.linalg.cond(g) > COND_LIMIT:
        raise SingularMetricError("metric condition number exceeds 1e12")
    return np.linalg.inv(g)


class ConstantMetric(Metric):
    def __init__(self, matrix):
        self._g = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.dimension = self._g.shape[0]
        self._ginv = _checked_inverse(self._g)

    def matrix(self, p):
        return self._g

    def inverse(self, p):
        return self._ginv

    def derivative(self, p):
        n = self.dimension
        return np.zeros((n, n, n))

    def christoffel(self, p):
        n = self.dimension
        return np.zeros((n, n, n))


def euclidean_metric(n: int) -> ConstantMetric:
    return ConstantMetric(np.eye(n))


class FunctionMetric(Metric):
    """Metric from user callables acting on chart coordinates."""

    def __init__(self, dim: int, fn: Callable, derivative: Callable | None = None):
        self.dimension = dim
        self._fn = fn
        self._dfn = derivative

    def matrix(self, p):
        return np.atleast_2d(np.asarray(self._fn(p.coords), dtype=float))

    def derivative(self, p):
        if self._dfn is None:
            return finite_difference_metric_derivative(self, p)
        return np.asarray(self._dfn(p.coords), dtype=float)


class BarrierMetric(Metric):
    """One-dimensional barrier metric ``g(x) = exp(a / (b x^b))``.

    Evaluated through ``log g`` so the Christoffel symbol and the inverse stay
    finite where ``g`` itself overflows.
    """

    dimension = 1

    def __init__(self, a: float = 1.0, b: float = 2.0):
        if not a > 0.0 or not b > 1.0:
            raise ValueError("barrier metric needs a > 0 and b > 1")
        self.a = float(a)
        self.b = float(b)

    def _log(self, p):
        x = float(p.coords[0])
        if x <= 0.0:
            raise ValueError("barrier metric evaluated at non-positive distance")
        return barrier_log_metric(x, self.a, self.b)

    def log_matrix(self, p) -> float:
        return self._log(p)[0]

    def matrix(self, p):
        with np.errstate(over="ignore"):
            return np.array([[np.exp(self._log(p)[0])]])

    def inverse(self, p):
        return np.array([[np.exp(-self._log(p)[0])]])

    def derivative(self, p):
        logg, dlog = self._log(p)
        with np.errstate(over="ignore"):
            return np.array([[[np.exp(logg) * dlog]]])

    def christoffel(self, p):
        return np.array([[[0.5 * self._log(p)[1]]]])


class ProductMetric(Metric):
    """Block-diagonal metric of a product of coordinate blocks."""

    def __init__(self, blocks, splitter: Callable):
        self.blocks = list(blocks)
        self.dimension = sum(b.dimension for b in self.blocks)
        self._split = splitter

    def _parts(self, p):
        return self._split(p)

    def _assemble(self, mats):
        out = np.zeros((self.dimension, self.dimension))
        i = 0
        for m in mats:
            k = m.shape[0]
            out[i:i + k, i:i + k] = m
            i += k
        return out

    def matrix(self, p):
        return self._assemble([b.matrix(q) for b, q in zip(self.blocks, self._parts(p))])

    def inverse(self, p):
        return self._assemble([b.inverse(q) for b, q in zip(self.blocks, self._parts(p))])

    def christoffel(self, p):
        n = self.dimension
        out = np.zeros((n, n, n))
        i = 0
        for b, q in zip(self.blocks, self._parts(p)):
            k = b.dimension
            out[i:i + k, i:i + k, i:i + k] = b.christoffel(q)
            i += k
        return out

    def derivative(self, p):
        n = self.dimension
        out = np.zeros((n, n, n))
        i = 0
        for b, q in zip(self.blocks, self._parts(p)):
            k = b.dimension
            out[i:i + k, i:i + k, i:i + k] = b.derivative(q)
            i += k
        return out


class PullbackMetric(Metric):
    """Constant ambient metric pulled back through a manifold's chart embedding."""

    def __init__(self, manifold: Manifold, ambient=None):
        self.manifold = manifold
        self.dimension = manifold.dimension
        d = manifold.embedding_dimension
        self.ambient = np.eye(d) if ambient is None else np.atleast_2d(np.asarray(ambient, dtype=float))

    def matrix(self, p):
        _, J, _ = self.manifold.embed(p.chart, p.coords)
        return J.T @ self.ambient @ J

    def derivative(self, p):
        _, J, H = self.manifold.embed(p.chart, p.coords)
        GJ = self.ambient @ J
        # dg[h] = H_h^T G J + J^T G H_h with H_h = H[:, :, h]
        t = np.einsum("aih,aj->hij", H, GJ)
        return t + t.transpose(0, 2, 1)


def christoffel(g: Metric, p: ChartPoint) -> np.ndarray:
    """Levi-Civita symbols ``G[k, i, j]`` of ``g`` at ``p``."""
    return g.christoffel(p)


def finite_difference_metric_derivative(g: Metric, p: ChartPoint, h: float = FD_STEP) -> np.ndarray:
    """Central differences of ``g`` (one-sided where the metric cannot be
    evaluated on one side)."""
    x = p.coords
    n = x.shape[0]
    out = np.zeros((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        try:
            gp = g.matrix(ChartPoint(p.chart, x + e))
        except ValueError:
            gp = None
        try:
            gm = g.matrix(ChartPoint(p.chart, x - e))
        except ValueError:
            gm = None
        if gp is not None and gm is not None:
            out[k] = (gp - gm) / (2 * h)
        elif gp is not None:
            out[k] = (gp - g.matrix(p)) / h
        elif gm is not None:
            out[k] = (g.matrix(p) - gm) / h
        else:
            raise ValueError("metric not evaluable around the requested point")
    return out


def sharp_gradient(g: Metric, p: ChartPoint, euclidean_gradient) -> np.ndarray:
    """Raise an index: ``g(p)^{-1} grad``."""
    return g.inverse(p) @ np.asarray(euclidean_gradient, dtype=float)


def geodesic_acceleration(g: Metric, p: ChartPoint, v) -> np.ndarray:
    G = g.christoffel(p)
    return -np.einsum("kij,i,j->k", G, v, v)


# -- potentials ----------------------------------------------------------------

class Potential:
    def value(self, p: ChartPoint) -> float:
        raise NotImplementedError

    def gradient(self, p: ChartPoint) -> np.ndarray:
        raise NotImplementedError


class ZeroPotential(Potential):
    def value(self, p):
        return 0.0

    def gradient(self, p):
        return np.zeros_like(p.coords)


class QuadraticPotential(Potential):
    """``scale * |x|^2``; the goal-attraction potential uses ``scale = 1``."""

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)

    def value(self, p):
        return self.scale * float(p.coords @ p.coords)

    def gradient(self, p):
        return 2.0 * self.scale * p.coords


class FunctionPotential(Potential):
    def __init__(self, value: Callable, gradient: Callable):
        self._v = value
        self._g = gradient

    def value(self, p):
        return float(self._v(p.coords))

    def gradient(self, p):
        return np.asarray(self._g(p.coords), dtype=float)


def zero_force(p: ChartPoint, ydot) -> np.ndarray:
    return np.zeros_like(np.asarray(ydot, dtype=float))


def linear_damping(c: float) -> Callable:
    """Dissipative force ``-c * ydot`` (coordinate covector)."""

    def force(p, ydot):
        return -c * np.asarray(ydot, dtype=float)

    return force


def constant_weight(matrix) -> Callable:
    w = np.atleast_2d(np.asarray(matrix, dtype=float))

    def weight(p, ydot):
        return w

    return weight


# -- ambient components and their pullback ------------------------------------

@dataclass
class AmbientComponents:
    """Task components defined in the ambient space of an embedded manifold.

    ``force(x, xdot)`` and ``potential`` act on ambient coordinates; ``metric``
    and ``weight`` are constant ambient matrices.
    """

    metric: np.ndarray
    force: Callable = zero_force
    potential: Potential | None = None
    weight: np.ndarray | None = None


class PullbackPotential(Potential):
    def __init__(self, manifold: Manifold, ambient: Potential):
        self.manifold = manifold
        self.ambient = ambient

    def value(self, p):
        y, _, _ = self.manifold.embed(p.chart, p.coords)
        return self.ambient.value(ChartPoint(0, y))

    def gradient(self, p):
        y, J, _ = self.manifold.embed(p.chart, p.coords)
        return J.T @ self.ambient.gradient(ChartPoint(0, y))


@dataclass
class ChartComponents:
    metric: Metric
    potential: Potential
    force: Callable
    weight: Callable


def pullback_through_embedding(amb: AmbientComponents, manifold: Manifold) -> ChartComponents:
    """Chart-level ``(g, F_D, Phi, w^a)`` induced by ambient components."""
    metric = PullbackMetric(manifold, amb.metric)
    potential = ZeroPotential() if amb.potential is None else PullbackPotential(manifold, amb.potential)
    ambient_force = amb.force
    w_bar = np.eye(manifold.embedding_dimension) if amb.weight is None else np.atleast_2d(amb.weight)

    # rank deficiency of the embedding Jacobian surfaces as a singular metric
    def _jac(p):
        y, J, _ = manifold.embed(p.chart, p.coords)
        return y, J

    def force(p, ydot):
        y, J = _jac(p)
        return J.T @ ambient_force(y, J @ ydot)

    def weight(p, ydot):
        _, J = _jac(p)
        return J.T @ w_bar @ J

    return ChartComponents(metric, potential, force, weight)
