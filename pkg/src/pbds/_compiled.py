"""Compiled evaluation of the built-in task families on R^n and spheres.

The generic path in :mod:`pbds.policy` accepts arbitrary tasks; this module
handles the common case of attractor, damping and ball-obstacle tasks with
one compiled call per policy evaluation.  Tests pin it to the generic path.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ._kernels import euclidean_distance, geodesic_distance, pinv_sym, stereo_embedding
from .manifolds import Euclidean, Sphere

ATTRACTOR, DAMPING, OBSTACLE = 0, 1, 2
ROBOT_EUCLIDEAN, ROBOT_SPHERE = 0, 1
ENGINE_PBDS, ENGINE_GDS = 0, 1
KIND_CODES = {"attractor": ATTRACTOR, "damping": DAMPING, "obstacle": OBSTACLE}
GDS_FD_STEP = 1e-6


class CollisionError(RuntimeError):
    """A constraint distance reached zero or below."""


@njit(cache=True)
def _embed(robot, sign, x):
    if robot == ROBOT_SPHERE:
        return stereo_embedding(x, sign)
    n = x.shape[0]
    return x.copy(), np.eye(n), np.zeros((n, n, n))


@njit(cache=True)
def _contract(H, v):
    d, m, _ = H.shape
    K = np.zeros((d, m))
    for a in range(d):
        for i in range(m):
            s = 0.0
            for k in range(m):
                s += H[a, i, k] * v[k]
            K[a, i] = s
    return K


@njit(cache=True)
def _scalar_map(robot, kind, y, Je, K, v, fp, vec):
    """Value, Jacobian row and Jacobian-derivative row of a distance task."""
    if kind == ATTRACTOR:
        if robot == ROBOT_SPHERE:
            d, grad, hess = geodesic_distance(y, vec)
        else:
            d, grad, hess = euclidean_distance(y, vec, 0.0)
    else:
        d, grad, hess = euclidean_distance(y, vec, fp[0])
    ydot = Je @ v
    J = grad @ Je
    Jd = (hess @ ydot) @ Je + grad @ K
    return d, J, Jd


@njit(cache=True)
def _toggle(d, dd, beta, eps):
    if eps > 0.0:
        near = 1.0
        if not math.isinf(beta):
            near = 0.5 * (1.0 + math.tanh(0.5 * (beta - d) / eps))
        return 0.5 * (1.0 + math.tanh(0.5 * (-dd / eps))) * near
    if dd < 0.0 and d < beta:
        return 1.0
    return 0.0


@njit(cache=True)
def _gds_metric(robot, sign, x, v):
    _, Je, H = _embed(robot, sign, x)
    K = _contract(H, v)
    return Je.T @ Je + K.T @ K


@njit(cache=True)
def _gds_damping(robot, sign, x, v, Je, c):
    """Desired chart acceleration of the damping task under the projected
    velocity metric, with RMPflow curvature terms by central differences."""
    m = x.shape[0]
    h = GDS_FD_STEP
    G = _gds_metric(robot, sign, x, v)
    dGx = np.zeros((m, m, m))
    dGv = np.zeros((m, m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        dGx[j] = (_gds_metric(robot, sign, x + e, v) - _gds_metric(robot, sign, x - e, v)) / (2 * h)
        dGv[j] = (_gds_metric(robot, sign, x, v + e) - _gds_metric(robot, sign, x, v - e)) / (2 * h)
    M = G.copy()
    xi = np.zeros(m)
    for k in range(m):
        for j in range(m):
            s = 0.0
            for i in range(m):
                s += v[i] * dGv[j, k, i]
            M[k, j] += 0.5 * s
        s = 0.0
        for i in range(m):
            for j in range(m):
                s += (dGx[j, k, i] - 0.5 * dGx[k, i, j]) * v[i] * v[j]
        xi[k] = s
    F = Je.T @ (-c * (Je @ v))
    return np.linalg.solve(M, F - xi)


@njit(cache=True)
def policy_kernel(robot, sign, x, v, kinds, fparams, vecs, engine, rtol):
    """Fused acceleration; returns ``(a, cond, min_constraint_distance)``.

    A non-positive constraint distance returns NaN accelerations.
    """
    m = x.shape[0]
    y, Je, H = _embed(robot, sign, x)
    K = _contract(H, v)
    ydot = Je @ v
    M = np.zeros((m, m))
    f = np.zeros(m)
    dmin = np.inf
    for t in range(kinds.shape[0]):
        kind = kinds[t]
        fp = fparams[t]
        if kind == DAMPING:
            c = fp[0]
            g = Je.T @ Je
            if engine == ENGINE_GDS:
                acc = _gds_damping(robot, sign, x, v, Je, c)
                M += g
                f += g @ acc
            else:
                # pulled-back metric: g G(v, v) lowered equals Je^T K v
                M += g
                f += Je.T @ (-c * ydot - K @ v)
        else:
            d, J, Jd = _scalar_map(robot, kind, y, Je, K, v, fp, vecs[t])
            dd = J @ v
            if kind == ATTRACTOR:
                A = -2.0 * d - Jd @ v
                w = 1.0
            else:
                if d < dmin:
                    dmin = d
                if d <= 0.0:
                    return np.full(m, np.nan), np.inf, d
                w = _toggle(d, dd, fp[3], fp[4])
                gamma = -0.5 * fp[1] / (d ** fp[2] * d)
                A = -Jd @ v - gamma * dd * dd
            if w != 0.0:
                for i in range(m):
                    f[i] += w * J[i] * A
                    for j in range(m):
                        M[i, j] += w * J[i] * J[j]
    Minv, cond, rank = pinv_sym(0.5 * (M + M.T), rtol)
    return Minv @ f, cond, dmin


@njit(cache=True)
def lyapunov_kernel(robot, sign, x, v, kinds, fparams, vecs):
    """``sum 1/2 |Jf v|^2_g + Phi`` over all tasks."""
    y, Je, H = _embed(robot, sign, x)
    K = _contract(H, v)
    ydot = Je @ v
    V = 0.0
    for t in range(kinds.shape[0]):
        kind = kinds[t]
        fp = fparams[t]
        if kind == DAMPING:
            V += 0.5 * (ydot @ ydot)
        else:
            d, J, _ = _scalar_map(robot, kind, y, Je, K, v, fp, vecs[t])
            dd = J @ v
            if kind == ATTRACTOR:
                V += 0.5 * dd * dd + d * d
            else:
                V += 0.5 * math.exp(fp[1] / (fp[2] * d ** fp[2])) * dd * dd
    return V


@njit(cache=True)
def rk4_step(robot, sign, x, v, dt, kinds, fparams, vecs, engine, rtol):
    """One RK4 step of ``(x, v)' = (v, a(x, v))`` within a single chart."""
    a1 = policy_kernel(robot, sign, x, v, kinds, fparams, vecs, engine, rtol)[0]
    x2 = x + 0.5 * dt * v
    v2 = v + 0.5 * dt * a1
    a2 = policy_kernel(robot, sign, x2, v2, kinds, fparams, vecs, engine, rtol)[0]
    x3 = x + 0.5 * dt * v2
    v3 = v + 0.5 * dt * a2
    a3 = policy_kernel(robot, sign, x3, v3, kinds, fparams, vecs, engine, rtol)[0]
    x4 = x + dt * v3
    v4 = v + dt * a3
    a4 = policy_kernel(robot, sign, x4, v4, kinds, fparams, vecs, engine, rtol)[0]
    xn = x + dt / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
    vn = v + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return xn, vn


class CompiledPolicy:
    """Packed task arrays plus thin wrappers around the compiled kernels."""

    def __init__(self, robot, kinds, fparams, vecs, engine=ENGINE_PBDS, rtol=1e-10):
        self.robot = robot
        self.kinds = kinds
        self.fparams = fparams
        self.vecs = vecs
        self.engine = engine
        self.rtol = rtol

    @staticmethod
    def sign(chart: int) -> float:
        return 1.0 if chart == 0 else -1.0

    def evaluate(self, chart, x, v):
        return policy_kernel(
            self.robot, self.sign(chart), x, v, self.kinds, self.fparams, self.vecs, self.engine, self.rtol
        )

    def acceleration(self, chart, x, v) -> np.ndarray:
        a, _, d = self.evaluate(chart, x, v)
        if d <= 0.0:
            raise CollisionError(f"constraint distance {d:.3e} <= 0")
        return a

    def lyapunov(self, chart, x, v) -> float:
        return lyapunov_kernel(self.robot, self.sign(chart), x, v, self.kinds, self.fparams, self.vecs)

    def step(self, chart, x, v, dt):
        return rk4_step(
            self.robot, self.sign(chart), x, v, dt, self.kinds, self.fparams, self.vecs, self.engine, self.rtol
        )


def compile_policy(tasks, manifold, engine: str = "pbds", rtol: float = 1e-10):
    """Compiled policy for ``tasks`` or ``None`` when some task or the
    manifold is outside the supported families."""
    if isinstance(manifold, Sphere):
        robot = ROBOT_SPHERE
    elif type(manifold) is Euclidean:
        robot = ROBOT_EUCLIDEAN
    else:
        return None
    if engine not in ("pbds", "gds"):
        return None
    d = manifold.embedding_dimension
    kinds = np.zeros(len(tasks), dtype=np.int64)
    fparams = np.zeros((len(tasks), 5))
    vecs = np.zeros((len(tasks), d))
    for i, t in enumerate(tasks):
        if t.kernel is None or t.domain is not manifold:
            return None
        name, params, vec = t.kernel
        kinds[i] = KIND_CODES[name]
        fparams[i, : len(params)] = params
        if len(vec):
            vecs[i] = vec
    code = ENGINE_PBDS if engine == "pbds" else ENGINE_GDS
    return CompiledPolicy(robot, kinds, fparams, vecs, code, rtol)
