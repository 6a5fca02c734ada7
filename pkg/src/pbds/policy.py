"""Per-task pullback quantities and their weighted least-squares fusion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._kernels import pinv_sym
from .manifolds import ChartPoint
from .tasks import TaskSpec

PINV_RTOL = 1e-10


@dataclass
class TaskAcceleration:
    """Quantities of one task at a robot state.

    ``A`` is the desired task-space acceleration with the map curvature
    removed, so that the fused policy solves ``Jf a ~ A`` in the ``w_a`` norm.
    """

    Jf: np.ndarray
    Jf_dot: np.ndarray
    Xi: np.ndarray
    A: np.ndarray
    w_a: np.ndarray
    y: ChartPoint | None = None
    ydot: np.ndarray | None = None


@dataclass
class PolicyOutput:
    acceleration: np.ndarray
    condition_number: float
    active_tasks: int
    rank: int
    residuals: list = field(default_factory=list)
    all_weights_zero: bool = False


def task_quantities(task: TaskSpec, p: ChartPoint, v) -> TaskAcceleration:
    """Evaluate one task at ``(p, v)``.

    The Christoffel symbols of the task metric enter through
    ``Xi[k, j] = G[k, l, h] ydot[h] Jf[l, j]``, so ``Xi v = G(ydot, ydot)`` and
    ``A = g^-1 (F_D - grad Phi) - (Jf_dot + Xi) v``.
    """
    v = np.asarray(v, dtype=float)
    y, J, Jd = task.map.evaluate(p, v)
    ydot = J @ v
    G = task.metric.christoffel(y)
    Xi = np.einsum("klh,h,lj->kj", G, ydot, J)
    rhs = task.metric.inverse(y) @ (task.force(y, ydot) - task.potential.gradient(y))
    A = rhs - (Jd + Xi) @ v
    w = np.atleast_2d(task.weight(y, ydot))
    return TaskAcceleration(J, Jd, Xi, A, w, y, ydot)


def fuse(quantities, m: int, rtol: float = PINV_RTOL) -> PolicyOutput:
    """Closed-form fusion ``(sum J^T w J)^+ (sum J^T w A)``."""
    M = np.zeros((m, m))
    f = np.zeros(m)
    active = 0
    for q in quantities:
        if not np.any(q.w_a):
            continue
        active += 1
        JtW = q.Jf.T @ q.w_a
        M += JtW @ q.Jf
        f += JtW @ q.A
    if active == 0:
        return PolicyOutput(np.zeros(m), np.inf, 0, 0, [0.0] * len(quantities), True)
    Minv, cond, rank = pinv_sym(0.5 * (M + M.T), rtol)
    a = Minv @ f
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite policy acceleration")
    residuals = []
    for q in quantities:
        r = q.Jf @ a - q.A
        residuals.append(float(np.sqrt(max(r @ q.w_a @ r, 0.0))))
    return PolicyOutput(a, float(cond), active, int(rank), residuals)


def combine(tasks, p: ChartPoint, v, rtol: float = PINV_RTOL) -> PolicyOutput:
    """Robot acceleration fusing all tasks at ``(p, v)``."""
    if not tasks:
        raise ValueError("combine needs at least one task")
    qs = [task_quantities(t, p, v) for t in tasks]
    return fuse(qs, p.coords.shape[0], rtol)


def _sqrt_psd(w: np.ndarray) -> np.ndarray:
    ev, U = np.linalg.eigh(0.5 * (w + w.T))
    return (U * np.sqrt(np.clip(ev, 0.0, None))) @ U.T


def least_squares_oracle(tasks, p: ChartPoint, v, rtol: float = PINV_RTOL) -> np.ndarray:
    """Minimum-norm minimizer of ``sum_i |Jf_i a + Jf_dot_i v - ydd_i|^2_{w_i}``.

    ``ydd_i`` is the task-space acceleration of the forced geodesic equation,
    ``g^-1 (F_D - grad Phi) - G(ydot, ydot)``, computed directly from the task
    components; the stacked system is handed to a dense least-squares solver.
    The singular-value cutoff ``sqrt(rtol)`` on the stacked matrix matches the
    ``rtol`` cutoff on its normal matrix.
    """
    v = np.asarray(v, dtype=float)
    rows, rhs = [], []
    for t in tasks:
        y, J, Jd = t.map.evaluate(p, v)
        ydot = J @ v
        G = t.metric.christoffel(y)
        ydd = np.linalg.solve(t.metric.matrix(y), t.force(y, ydot) - t.potential.gradient(y))
        ydd = ydd - np.einsum("kij,i,j->k", G, ydot, ydot)
        S = _sqrt_psd(np.atleast_2d(t.weight(y, ydot)))
        rows.append(S @ J)
        rhs.append(S @ (ydd - Jd @ v))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    if not np.any(A):
        return np.zeros(v.shape[0])
    sol, *_ = scipy.linalg.lstsq(A, b, cond=np.sqrt(rtol))
    return sol
