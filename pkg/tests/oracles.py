"""Reference computations that share no code with the package under test.

Strip flows are checked against the matrix exponential and against an
adaptive Runge-Kutta integration; sewn trajectories against Runge-Kutta on
the full piecewise linear field.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm


def affine_expm(matrix, offset, p0, t):
    """``p(t)`` of ``p' = A p + b`` through the exponential of the augmented 3x3 matrix."""
    m = np.zeros((3, 3))
    m[:2, :2] = matrix
    m[:2, 2] = offset
    z = expm(m * t) @ np.array([p0[0], p0[1], 1.0])
    return z[:2]


def affine_rk(matrix, offset, p0, t, rtol=1e-13, atol=1e-13):
    a = np.asarray(matrix, float)
    b = np.asarray(offset, float)
    sol = solve_ivp(lambda _, p: a @ p + b, (0.0, t), np.asarray(p0, float), method="DOP853", rtol=rtol, atol=atol)
    return sol.y[:, -1]


def phi_ref(corners, k1, k2, x):
    """phi from the corner list alone: linear interpolation, extended with slope k1 at both ends."""
    xs = [c[0] for c in corners]
    ys = [c[1] for c in corners]
    if x <= xs[0]:
        return ys[0] + k1 * (x - xs[0])
    if x >= xs[-1]:
        return ys[-1] + k1 * (x - xs[-1])
    return float(np.interp(x, xs, ys))


def field_rk(corners, k1, k2, alpha, beta, p0, t, rtol=1e-12, atol=1e-12, dense=False):
    """Integrate the full sewed system ``x' = y - phi(x)``, ``y' = beta - alpha x - y``."""

    def rhs(_, p):
        return [p[1] - phi_ref(corners, k1, k2, p[0]), beta - alpha * p[0] - p[1]]

    sol = solve_ivp(rhs, (0.0, t), np.asarray(p0, float), method="DOP853", rtol=rtol, atol=atol, dense_output=dense)
    return sol


def rk_return(corners, k1, k2, alpha, beta, corner, s0, t_max=200.0):
    """First return to the ray below ``corner`` (leftward crossing), by RK with event location."""
    xj, yj = corners[corner - 1]

    def rhs(_, p):
        return [p[1] - phi_ref(corners, k1, k2, p[0]), beta - alpha * p[0] - p[1]]

    def hit(_, p):
        return p[0] - xj

    hit.direction = -1.0
    p0 = [xj, yj - s0]
    sol = solve_ivp(rhs, (0.0, t_max), p0, method="DOP853", rtol=1e-12, atol=1e-12, events=hit)
    for tt, yy in zip(sol.t_events[0], sol.y_events[0]):
        if tt > 1e-9 and yy[1] < yj:
            return yj - yy[1], tt
    return None, None


def focus_strip(sigma, omega, delta0, inside):
    """Matrix and offset of a focus with eigenvalues ``sigma +- i omega`` in the strip ``x < 0``.

    The equilibrium sits at distance ``delta0`` from the line ``x = 0``, on
    its far side (``inside=False``) or in the strip (``inside=True``).
    """
    m = -1.0 - 2.0 * sigma
    alpha = sigma * sigma + omega * omega - m
    ex = -delta0 if inside else delta0
    matrix = ((-m, 1.0), (-alpha, -1.0))
    return matrix, (0.0, alpha * ex + m * ex)


def strip_exit_rk(matrix, offset, p0, t_max=200.0):
    """First return to ``x = 0`` from a start on it, moving left, by RK with event location."""
    a = np.asarray(matrix, float)
    b = np.asarray(offset, float)

    def hit(_, p):
        return p[0]

    hit.direction = 1.0
    sol = solve_ivp(
        lambda _, p: a @ p + b, (0.0, t_max), np.asarray(p0, float),
        method="DOP853", rtol=1e-13, atol=1e-13, events=hit,
    )
    ts = [t for t in sol.t_events[0] if t > 1e-9]
    if not ts:
        return None, None
    i = list(sol.t_events[0]).index(ts[0])
    return sol.y_events[0][i], ts[0]
