"""Compiled adaptive DOP853 stepping for the mean-field equations of motion.

Tableau taken from scipy's DOP853 implementation; step-size control
follows the same error norm.  Systems:

* ``CHART``:     y = (x, p, Z, dphi)
* ``CARTESIAN``: y = (x, p, s_x, s_y, s_z), possibly several copies stacked.
"""

import math

import numba
import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _coef

CHART = 0
CARTESIAN = 1

N_STAGES = _coef.N_STAGES
A = np.ascontiguousarray(_coef.A[:N_STAGES, :N_STAGES])
B = np.ascontiguousarray(_coef.B)
C = np.ascontiguousarray(_coef.C[:N_STAGES])
E3 = np.ascontiguousarray(_coef.E3)
E5 = np.ascontiguousarray(_coef.E5)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERR_EXPONENT = -1.0 / 8.0

OK = 0
POLE = 1
UNDERFLOW = 2
MAX_STEPS = 3
FULL = 4

SQRT2 = math.sqrt(2.0)


@numba.njit(cache=True)
def rhs(kind, y, par, out):
    omega, g, lam = par[0], par[1], par[2]
    if kind == CHART:
        x, p, z, phi = y[0], y[1], y[2], y[3]
        r = math.sqrt(max(1.0 - z * z, 0.0))
        drive = g * SQRT2 * x + lam
        out[0] = p
        out[1] = -x - g * SQRT2 * r * math.cos(phi)
        out[2] = drive * r * math.sin(phi)
        out[3] = 0.5 * omega - drive * math.cos(phi) * z / r
    else:
        for b in range(y.shape[0] // 5):
            o = 5 * b
            x, p, sx, sy, sz = y[o], y[o + 1], y[o + 2], y[o + 3], y[o + 4]
            bx = g * SQRT2 * x + lam
            bz = 0.5 * omega
            out[o] = p
            out[o + 1] = -x - g * SQRT2 * sx
            # s' = B x s with B = (bx, 0, bz)
            out[o + 2] = -bz * sy
            out[o + 3] = bz * sx - bx * sz
            out[o + 4] = bx * sy


@numba.njit(cache=True)
def energy(kind, y, par):
    omega, g, lam = par[0], par[1], par[2]
    if kind == CHART:
        x, p, z, phi = y[0], y[1], y[2], y[3]
        r = math.sqrt(max(1.0 - z * z, 0.0))
        return 0.5 * (p * p + x * x) + 0.5 * omega * z + (g * SQRT2 * x + lam) * r * math.cos(phi)
    x, p, sx, sz = y[0], y[1], y[2], y[4]
    return 0.5 * (p * p + x * x) + 0.5 * omega * sz + (g * SQRT2 * x + lam) * sx


@numba.njit(cache=True)
def _normalize_spins(kind, y):
    if kind == CARTESIAN:
        for b in range(y.shape[0] // 5):
            o = 5 * b
            nrm = math.sqrt(y[o + 2] ** 2 + y[o + 3] ** 2 + y[o + 4] ** 2)
            y[o + 2] /= nrm
            y[o + 3] /= nrm
            y[o + 4] /= nrm


@numba.njit(cache=True)
def _step(kind, t, y, f, h, par, K, y_new, f_new, tmp, rtol, atol):
    """One DOP853 step of size ``h``; fills ``y_new``/``f_new`` and returns the error norm."""
    n = y.shape[0]
    K[0, :] = f
    for s in range(1, N_STAGES):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * K[j, i]
            tmp[i] = y[i] + h * acc
        rhs(kind, tmp, par, K[s])
    for i in range(n):
        acc = 0.0
        for j in range(N_STAGES):
            acc += B[j] * K[j, i]
        y_new[i] = y[i] + h * acc
    rhs(kind, y_new, par, f_new)
    K[N_STAGES, :] = f_new
    e5 = 0.0
    e3 = 0.0
    for i in range(n):
        sc = atol + max(abs(y[i]), abs(y_new[i])) * rtol
        a5 = 0.0
        a3 = 0.0
        for j in range(N_STAGES + 1):
            a5 += E5[j] * K[j, i]
            a3 += E3[j] * K[j, i]
        e5 += (a5 / sc) ** 2
        e3 += (a3 / sc) ** 2
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * n)


@numba.njit(cache=True)
def _pole(kind, y, pole_eps):
    return kind == CHART and abs(y[2]) > 1.0 - pole_eps


@numba.njit(cache=True)
def advance(kind, t, y, h, t_target, par, rtol, atol, max_steps, pole_eps):
    """Integrate in place from ``t`` to exactly ``t_target``.

    Returns ``(status, h_next, n_steps)``; ``h`` is the proposed step size
    (its sign is ignored).
    """
    n = y.shape[0]
    K = np.empty((N_STAGES + 1, n))
    f = np.empty(n)
    y_new = np.empty(n)
    f_new = np.empty(n)
    tmp = np.empty(n)
    rhs(kind, y, par, f)
    direction = 1.0 if t_target >= t else -1.0
    h = abs(h)
    steps = 0
    rejected = False
    while direction * (t_target - t) > 0.0:
        if steps >= max_steps:
            return MAX_STEPS, h, steps
        min_step = 10.0 * abs(np.nextafter(t, direction * np.inf) - t)
        if h < min_step:
            return UNDERFLOW, h, steps
        remaining = abs(t_target - t)
        last = h >= remaining
        hs = remaining if last else h
        err = _step(kind, t, y, f, direction * hs, par, K, y_new, f_new, tmp, rtol, atol)
        if err < 1.0:
            factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err**ERR_EXPONENT)
            if rejected:
                factor = min(1.0, factor)
            t = t_target if last else t + direction * hs
            y[:] = y_new
            _normalize_spins(kind, y)
            rhs(kind, y, par, f)
            if not last:
                h = hs * factor
            rejected = False
            steps += 1
            if _pole(kind, y, pole_eps):
                return POLE, h, steps
        else:
            h = hs * max(MIN_FACTOR, SAFETY * err**ERR_EXPONENT)
            rejected = True
    return OK, h, steps


@numba.njit(cache=True)
def trajectory(kind, y0, par, times, h0, rtol, atol, max_steps, pole_eps):
    """States at each entry of monotone ``times`` (``times[0]`` is the start)."""
    n = y0.shape[0]
    out = np.empty((times.shape[0], n))
    y = y0.copy()
    out[0] = y
    h = h0
    total = 0
    for k in range(1, times.shape[0]):
        status, h, steps = advance(kind, times[k - 1], y, h, times[k], par, rtol, atol, max_steps - total, pole_eps)
        total += steps
        out[k] = y
        if status != OK:
            return out, status, k, total
    return out, OK, times.shape[0], total


@numba.njit(cache=True)
def section(kind, y0, par, t_end, comp, level, direction, h0, rtol, atol, max_steps, pole_eps, max_points):
    """Crossings of ``y[comp] = level`` in the sense ``direction`` (+1 upward,
    -1 downward), located by Newton iteration on sub-steps from the
    bracketing step start.  Time runs from 0 to ``t_end``."""
    n = y0.shape[0]
    pts = np.empty((max_points, n))
    tcross = np.empty(max_points)
    K = np.empty((N_STAGES + 1, n))
    f = np.empty(n)
    y = y0.copy()
    y_new = np.empty(n)
    f_new = np.empty(n)
    tmp = np.empty(n)
    ys = np.empty(n)
    fs = np.empty(n)
    rhs(kind, y, par, f)
    t = 0.0
    h = h0
    steps = 0
    count = 0
    rejected = False
    while t < t_end:
        if steps >= max_steps:
            return pts[:count], tcross[:count], MAX_STEPS
        if h < 10.0 * abs(np.nextafter(t, np.inf) - t):
            return pts[:count], tcross[:count], UNDERFLOW
        last = h >= t_end - t
        hs = t_end - t if last else h
        err = _step(kind, t, y, f, hs, par, K, y_new, f_new, tmp, rtol, atol)
        if err >= 1.0:
            h = hs * max(MIN_FACTOR, SAFETY * err**ERR_EXPONENT)
            rejected = True
            continue
        factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err**ERR_EXPONENT)
        if rejected:
            factor = min(1.0, factor)
        rejected = False
        z0 = direction * (y[comp] - level)
        z1 = direction * (y_new[comp] - level)
        if z0 < 0.0 <= z1 and count < max_points:
            tau = hs * z0 / (z0 - z1)
            for _ in range(40):
                _step(kind, t, y, f, tau, par, K, ys, fs, tmp, rtol, atol)
                dz = fs[comp]
                if dz == 0.0:
                    break
                delta = (ys[comp] - level) / dz
                tau -= delta
                tau = min(max(tau, 0.0), hs)
                if abs(delta) <= 1e-15 * max(1.0, abs(tau)):
                    break
            _step(kind, t, y, f, tau, par, K, ys, fs, tmp, rtol, atol)
            _normalize_spins(kind, ys)
            pts[count] = ys
            tcross[count] = t + tau
            count += 1
        t = t_end if last else t + hs
        y[:] = y_new
        _normalize_spins(kind, y)
        rhs(kind, y, par, f)
        if not last:
            h = hs * factor
        steps += 1
        if _pole(kind, y, pole_eps):
            return pts[:count], tcross[:count], POLE
        if count >= max_points:
            return pts[:count], tcross[:count], FULL
    return pts[:count], tcross[:count], OK


@numba.njit(cache=True)
def benettin(y0, par, d0, interval, n_intervals, h0, rtol, atol, max_steps):
    """Two-trajectory largest-Lyapunov estimate in Cartesian variables.

    ``y0`` stacks the reference and the perturbed state (length 10).
    Returns the running exponent after each renormalization and a status.
    """
    y = y0.copy()
    history = np.empty(n_intervals)
    log_sum = 0.0
    h = h0
    t = 0.0
    total = 0
    for k in range(n_intervals):
        status, h, steps = advance(CARTESIAN, t, y, h, t + interval, par, rtol, atol, max_steps - total, 1.0)
        total += steps
        if status != OK:
            return history[:k], status
        t += interval
        d = 0.0
        for i in range(5):
            d += (y[5 + i] - y[i]) ** 2
        d = math.sqrt(d)
        log_sum += math.log(d / d0)
        history[k] = log_sum / t
        for i in range(5):
            y[5 + i] = y[i] + (y[5 + i] - y[i]) * (d0 / d)
    return history, OK
