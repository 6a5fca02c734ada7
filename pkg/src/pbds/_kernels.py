"""Compiled numerical primitives shared by the generic and compiled policy paths."""

import math

import numpy as np
from numba import njit

ANTIPODE_MARGIN = 1e-3


@njit(cache=True)
def stereo_embedding(x, sign):
    """Inverse stereographic map of one chart with first and second derivatives.

    ``sign`` is +1 for the chart projecting from the south pole (its origin is
    the north pole) and -1 for the chart projecting from the north pole.
    Returns ``(y, J, H)`` with ``J[a, i] = dy_a/dx_i`` and
    ``H[a, i, j] = d^2 y_a / dx_i dx_j``.
    """
    n = x.shape[0]
    a = 1.0
    for i in range(n):
        a += x[i] * x[i]
    a2 = a * a
    a3 = a2 * a
    y = np.empty(n + 1)
    J = np.zeros((n + 1, n))
    H = np.zeros((n + 1, n, n))
    for i in range(n):
        y[i] = 2.0 * x[i] / a
    y[n] = sign * (2.0 - a) / a
    for i in range(n):
        for j in range(n):
            J[i, j] = -4.0 * x[i] * x[j] / a2
        J[i, i] += 2.0 / a
        J[n, i] = -4.0 * sign * x[i] / a2
    for i in range(n):
        for j in range(n):
            for k in range(n):
                val = 16.0 * x[i] * x[j] * x[k] / a3
                if i == j:
                    val -= 4.0 * x[k] / a2
                if i == k:
                    val -= 4.0 * x[j] / a2
                if j == k:
                    val -= 4.0 * x[i] / a2
                H[i, j, k] = val
    for j in range(n):
        for k in range(n):
            val = 16.0 * x[j] * x[k] / a3
            if j == k:
                val -= 4.0 / a2
            H[n, j, k] = sign * val
    return y, J, H


@njit(cache=True)
def stereo_chart(y, sign):
    """Chart coordinates of a unit vector ``y`` (inverse of ``stereo_embedding``)."""
    n = y.shape[0] - 1
    den = 1.0 + sign * y[n]
    x = np.empty(n)
    for i in range(n):
        x[i] = y[i] / den
    return x


@njit(cache=True)
def inversion(x):
    """Sphere chart transition ``x -> x / |x|^2`` with Jacobian and Hessian."""
    n = x.shape[0]
    r2 = 0.0
    for i in range(n):
        r2 += x[i] * x[i]
    r4 = r2 * r2
    r6 = r4 * r2
    z = x / r2
    J = np.zeros((n, n))
    H = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            J[i, j] = -2.0 * x[i] * x[j] / r4
        J[i, i] += 1.0 / r2
    for i in range(n):
        for j in range(n):
            for k in range(n):
                val = 8.0 * x[i] * x[j] * x[k] / r6
                if i == j:
                    val -= 2.0 * x[k] / r4
                if i == k:
                    val -= 2.0 * x[j] / r4
                if j == k:
                    val -= 2.0 * x[i] / r4
                H[i, j, k] = val
    return z, J, H


@njit(cache=True)
def geodesic_distance(y, goal):
    """Great-circle distance from ``y/|y|`` to the unit vector ``goal``.

    The function is extended to all nonzero ``y`` as a degree-0 homogeneous
    function; returns ``(d, grad, hess)`` of that extension.  At the goal the
    derivatives are returned as zeros.  Within ``ANTIPODE_MARGIN`` of the
    antipode the curvature factor is frozen at its value on the margin.
    """
    dim = y.shape[0]
    c = 0.0
    for i in range(dim):
        c += y[i] * goal[i]
    q = y - c * goal
    s = 0.0
    for i in range(dim):
        s += q[i] * q[i]
    s = math.sqrt(s)
    d = math.atan2(s, c)
    grad = np.zeros(dim)
    hess = np.zeros((dim, dim))
    if s == 0.0:
        if c < 0.0:
            raise ValueError("geodesic distance gradient undefined at the antipode")
        return d, grad, hess
    r2 = s * s + c * c
    u = q / s
    s_eff = s
    if c < 0.0:
        s_min = math.sin(ANTIPODE_MARGIN)
        if s_eff < s_min:
            s_eff = s_min
    N = c * u - s * goal
    grad[:] = N / r2
    for i in range(dim):
        for j in range(dim):
            p_ij = -goal[i] * goal[j]
            if i == j:
                p_ij += 1.0
            dn = u[i] * goal[j] - goal[i] * u[j] + (c / s_eff) * (p_ij - u[i] * u[j])
            hess[i, j] = dn / r2 - 2.0 * N[i] * y[j] / (r2 * r2)
    # symmetrize rounding residue
    for i in range(dim):
        for j in range(i + 1, dim):
            m = 0.5 * (hess[i, j] + hess[j, i])
            hess[i, j] = m
            hess[j, i] = m
    return d, grad, hess


@njit(cache=True)
def euclidean_distance(y, center, radius):
    """``|y - center| - radius`` with gradient and Hessian (zeros at the center)."""
    dim = y.shape[0]
    diff = y - center
    rho = 0.0
    for i in range(dim):
        rho += diff[i] * diff[i]
    rho = math.sqrt(rho)
    grad = np.zeros(dim)
    hess = np.zeros((dim, dim))
    if rho == 0.0:
        return -radius, grad, hess
    u = diff / rho
    grad[:] = u
    for i in range(dim):
        for j in range(dim):
            hess[i, j] = -u[i] * u[j] / rho
        hess[i, i] += 1.0 / rho
    return rho - radius, grad, hess


@njit(cache=True)
def barrier_log_metric(x, a, b):
    """``log g`` and ``d log g / dx`` for ``g(x) = exp(a / (b x^b))``."""
    xb = x ** b
    return a / (b * xb), -a / (xb * x)


@njit(cache=True)
def christoffel_from_derivative(ginv, dg):
    """Levi-Civita symbols ``G[k, i, j]`` from ``dg[h, i, j] = d_h g_ij``."""
    n = ginv.shape[0]
    T = np.empty((n, n, n))
    for h in range(n):
        for i in range(n):
            for j in range(n):
                T[h, i, j] = dg[i, j, h] + dg[j, i, h] - dg[h, i, j]
    G = np.zeros((n, n, n))
    for k in range(n):
        for h in range(n):
            gkh = 0.5 * ginv[k, h]
            if gkh != 0.0:
                for i in range(n):
                    for j in range(n):
                        G[k, i, j] += gkh * T[h, i, j]
    return G


@njit(cache=True)
def pinv_sym(M, rtol):
    """SVD pseudoinverse with relative cutoff; returns ``(pinv, cond, rank)``."""
    n = M.shape[0]
    U, s, Vt = np.linalg.svd(M)
    smax = s[0]
    out = np.zeros((n, n))
    if smax == 0.0:
        return out, np.inf, 0
    cut = rtol * smax
    rank = 0
    for k in range(n):
        if s[k] > cut:
            rank += 1
            for i in range(n):
                for j in range(n):
                    out[i, j] += Vt[k, i] * U[j, k] / s[k]
    smin = s[n - 1]
    cond = np.inf if smin == 0.0 else smax / smin
    return out, cond, rank
