"""Coordinate-block GDS baseline used to exhibit chart dependence.

A task carrying a block tangent-bundle metric defined in a reference chart
(for embedded manifolds: the ambient space) is re-expressed in the current
chart; only the velocity block of the transformed metric is kept, and the
resulting velocity-dependent metric is fused with RMPflow-style curvature
terms.  Because the kept block depends on second derivatives of the chart
map, the policy depends on the chart.
"""

from __future__ import annotations

import numpy as np

from .manifolds import ChartPoint, Manifold
from .policy import PINV_RTOL, PolicyOutput, TaskAcceleration, fuse, task_quantities

FD_STEP = 1e-6


class BlockVelocityMetric:
    """Block-diagonal tangent-bundle metric ``gv dv dv + ga da da``.

    Each block is a constant matrix or a callable ``(coords, velocity)``.
    """

    def __init__(self, gv, ga=None):
        self._gv = gv
        self._ga = gv if ga is None else ga

    @staticmethod
    def _eval(b, x, v):
        if callable(b):
            return np.atleast_2d(np.asarray(b(x, v), dtype=float))
        return np.atleast_2d(np.asarray(b, dtype=float))

    def blocks(self, x, v):
        return self._eval(self._gv, x, v), self._eval(self._ga, x, v)


def _fd_second_contraction(phi, x, v, h=1e-5, t=1e-4):
    """``(Jv, Jav)`` with ``Jav[j, i] = v^k d^2 phi^j / dx^i dx^k``, by central
    and mixed central differences."""
    def f(z):
        return np.asarray(phi(z), dtype=float)

    m = x.shape[0]
    cols, mixed = [], []
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
        e[i] = t
        d = f(x + e + t * v) - f(x - e + t * v) - f(x + e - t * v) + f(x - e - t * v)
        mixed.append(d / (4 * t * t))
    return np.column_stack(cols), np.column_stack(mixed)


def transition_bundle_metric(g: BlockVelocityMetric, phi, p_hat, v_hat) -> np.ndarray:
    """Full ``2m x 2m`` metric ``Jphi^T blockdiag(gv, ga) Jphi`` in the source
    chart, for the transition ``phi`` (source coords to reference coords).

    ``Jphi = [[Jv, 0], [Jav, Ja]]`` with ``Ja = Jv``; the derivatives of
    ``phi`` are taken by finite differences.
    """
    x = np.asarray(p_hat, dtype=float)
    v = np.asarray(v_hat, dtype=float)
    Jv, Jav = _fd_second_contraction(phi, x, v)
    gv, ga = g.blocks(np.asarray(phi(x), dtype=float), Jv @ v)
    d, m = Jv.shape
    Jphi = np.zeros((2 * d, 2 * m))
    Jphi[:d, :m] = Jv
    Jphi[d:, :m] = Jav
    Jphi[d:, m:] = Jv
    G = np.zeros((2 * d, 2 * d))
    G[:d, :d] = gv
    G[d:, d:] = ga
    out = Jphi.T @ G @ Jphi
    return 0.5 * (out + out.T)


class LiftedBlockMetric:
    """Block metric defined on the ambient space of ``manifold``; its velocity
    block in a chart is ``J^T gv J + K^T ga K`` with ``K = sum_k v_k H_k``
    from the chart embedding."""

    def __init__(self, manifold: Manifold, gv, ga=None):
        self.manifold = manifold
        self.block = BlockVelocityMetric(gv, ga)

    def velocity_metric(self, p: ChartPoint, v) -> np.ndarray:
        y, J, H = self.manifold.embed(p.chart, p.coords)
        K = H @ v
        gv, ga = self.block.blocks(y, J @ v)
        G = J.T @ gv @ J + K.T @ ga @ K
        return 0.5 * (G + G.T)


def _curvature_terms(G_of, x, v, h=FD_STEP):
    """``(G, Xi_G, xi_G)`` of a velocity-dependent metric ``G_of(x, v)``.

    ``M = G + Xi_G`` with ``Xi_G[k, j] = 1/2 v_i dG_ki/dv_j`` and
    ``xi_G[k] = dG_ki/dx_j v_i v_j - 1/2 d_k G_ij v_i v_j``.
    """
    m = x.shape[0]
    G = G_of(x, v)
    dGx = np.zeros((m, m, m))  # dGx[j] = dG/dx_j
    dGv = np.zeros((m, m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        dGx[j] = (G_of(x + e, v) - G_of(x - e, v)) / (2 * h)
        dGv[j] = (G_of(x, v + e) - G_of(x, v - e)) / (2 * h)
    Xi = 0.5 * np.einsum("i,jki->kj", v, dGv)
    xi = np.einsum("jki,i,j->k", dGx, v, v) - 0.5 * np.einsum("kij,i,j->k", dGx, v, v)
    return G, Xi, xi


def gds_task_quantities(task, p: ChartPoint, v) -> TaskAcceleration:
    """Per-task desired acceleration under the block-projected metric.

    Tasks without a block metric use their intrinsic metric, for which the
    construction reduces to the PBDS quantities.
    """
    if task.gds_block is None:
        return task_quantities(task, p, v)
    v = np.asarray(v, dtype=float)
    y, J, Jd = task.map.evaluate(p, v)
    ydot = J @ v
    chart = y.chart

    def G_of(z, u):
        return task.gds_block.velocity_metric(ChartPoint(chart, z), u)

    G, XiG, xiG = _curvature_terms(G_of, y.coords, ydot)
    F = task.force(y, ydot) - task.potential.gradient(y)
    ydd = np.linalg.solve(G + XiG, F - xiG)
    A = ydd - Jd @ v
    w = np.atleast_2d(task.weight(y, ydot))
    return TaskAcceleration(J, Jd, np.zeros_like(J), A, w, y, ydot)


def gds_combine(tasks, p: ChartPoint, v, rtol: float = PINV_RTOL) -> PolicyOutput:
    if not tasks:
        raise ValueError("gds_combine needs at least one task")
    qs = [gds_task_quantities(t, p, v) for t in tasks]
    return fuse(qs, p.coords.shape[0], rtol)
