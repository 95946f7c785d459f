"""Jitted numerical kernels: the adaptive Runge-Kutta integrator and the
relative least-squares residual used by the fitting objective.

Everything here works on plain float64 arrays so the hot path of the
Monte-Carlo pipeline (millions of ODE solves) stays out of the Python
interpreter.  The public API wraps these in `integrate` and `Objective`.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# Dormand-Prince 5(4) coefficients.  The propagated solution is 5th order;
# the embedded 4th-order solution provides the error estimate (E* row).
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

# integrator status codes
STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_MAX_STEPS = 2

# observable codes shared with the observation layer
CODE_PREVALENCE = 0
CODE_INCIDENCE = 1
CODE_CUMULATIVE = 2


@njit(cache=True)
def rhs(y, out, beta, gamma, alpha, n_sens):
    """SEIR right-hand side, optionally augmented with forward sensitivities.

    Layout: y[0:5] = (S, E, I, R, C); y[5+5j : 10+5j] = d(state)/d(p_j) for
    p = (beta, gamma, alpha).  `n_sens` is 0 (state only) or 3 (augmented).
    """
    s = y[0]
    e = y[1]
    i = y[2]
    new_inf = beta * s * i
    out[0] = -new_inf
    out[1] = new_inf - gamma * e
    out[2] = gamma * e - alpha * i
    out[3] = alpha * i
    out[4] = new_inf
    for j in range(n_sens):
        o = 5 + 5 * j
        s_s = y[o]
        s_e = y[o + 1]
        s_i = y[o + 2]
        # chain-rule flow through the bilinear transmission term
        flow = beta * i * s_s + beta * s * s_i
        f_beta = s * i if j == 0 else 0.0
        f_gamma = e if j == 1 else 0.0
        f_alpha = i if j == 2 else 0.0
        out[o] = -flow - f_beta
        out[o + 1] = flow + f_beta - gamma * s_e - f_gamma
        out[o + 2] = gamma * s_e - alpha * s_i + f_gamma - f_alpha
        out[o + 3] = alpha * s_i + f_alpha
        out[o + 4] = flow + f_beta


@njit(cache=True)
def integrate_grid(beta, gamma, alpha, y0, times, rtol, atol, n_sens, max_steps):
    """Integrate from times[0], landing exactly on every entry of `times`.

    Adaptive embedded 5(4) pair with a scaled-RMS error norm; steps are
    clipped to the next output time, so requested times are hit exactly and
    the step sequence over a shared prefix of two grids is identical.

    Returns (values, status, t_fail): values has one row per output time,
    status is STATUS_OK / STATUS_STEP_UNDERFLOW / STATUS_MAX_STEPS, and
    t_fail is the time reached when integration gave up.
    """
    n = y0.shape[0]
    nt = times.shape[0]
    out = np.empty((nt, n))
    y = y0.copy()
    t = times[0]
    out[0] = y

    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    y_stage = np.empty(n)
    y_new = np.empty(n)

    span = times[nt - 1] - times[0]
    if span <= 0.0:
        return out, STATUS_OK, t
    h = span / 100.0
    if h > 1.0:
        h = 1.0
    h_min = 1e-12 * span

    rhs(y, k1, beta, gamma, alpha, n_sens)
    idx = 1
    steps = 0
    while idx < nt:
        steps += 1
        if steps > max_steps:
            return out, STATUS_MAX_STEPS, t
        t_next = times[idx]
        on_grid = False
        if t + h >= t_next:
            h = t_next - t
            on_grid = True
        elif t + h <= t:
            return out, STATUS_STEP_UNDERFLOW, t

        for m in range(n):
            y_stage[m] = y[m] + h * _A21 * k1[m]
        rhs(y_stage, k2, beta, gamma, alpha, n_sens)
        for m in range(n):
            y_stage[m] = y[m] + h * (_A31 * k1[m] + _A32 * k2[m])
        rhs(y_stage, k3, beta, gamma, alpha, n_sens)
        for m in range(n):
            y_stage[m] = y[m] + h * (_A41 * k1[m] + _A42 * k2[m] + _A43 * k3[m])
        rhs(y_stage, k4, beta, gamma, alpha, n_sens)
        for m in range(n):
            y_stage[m] = y[m] + h * (_A51 * k1[m] + _A52 * k2[m] + _A53 * k3[m] + _A54 * k4[m])
        rhs(y_stage, k5, beta, gamma, alpha, n_sens)
        for m in range(n):
            y_stage[m] = y[m] + h * (_A61 * k1[m] + _A62 * k2[m] + _A63 * k3[m]
                                     + _A64 * k4[m] + _A65 * k5[m])
        rhs(y_stage, k6, beta, gamma, alpha, n_sens)
        for m in range(n):
            y_new[m] = y[m] + h * (_B1 * k1[m] + _B3 * k3[m] + _B4 * k4[m]
                                   + _B5 * k5[m] + _B6 * k6[m])
        rhs(y_new, k7, beta, gamma, alpha, n_sens)

        err_sq = 0.0
        for m in range(n):
            e = h * (_E1 * k1[m] + _E3 * k3[m] + _E4 * k4[m]
                     + _E5 * k5[m] + _E6 * k6[m] + _E7 * k7[m])
            ay = abs(y[m])
            an = abs(y_new[m])
            scale = atol + rtol * (ay if ay > an else an)
            q = e / scale
            err_sq += q * q
        err = np.sqrt(err_sq / n)

        if err <= 1.0:
            t = t_next if on_grid else t + h
            for m in range(n):
                y[m] = y_new[m]
                k1[m] = k7[m]  # first-same-as-last
            if on_grid:
                out[idx] = y
                idx += 1
            factor = 5.0 if err == 0.0 else 0.9 * err ** -0.2
            if factor > 5.0:
                factor = 5.0
            elif factor < 0.2:
                factor = 0.2
            h = h * factor
        else:
            # rejected step (err > 1, or NaN from an overflowing trial state)
            factor = 0.9 * err ** -0.2
            if not factor < 1.0:
                factor = 0.1
            elif factor < 0.1:
                factor = 0.1
            h = h * factor
            if h < h_min:
                return out, STATUS_STEP_UNDERFLOW, t
    return out, STATUS_OK, t


@njit(cache=True)
def observable_values(states, code):
    """Extract one observable series from grid solutions that include t=0.

    `states` has one row per grid time with the t=0 row first; the result is
    aligned to the observation times (rows 1..end).
    """
    n = states.shape[0] - 1
    vals = np.empty(n)
    for i in range(n):
        if code == CODE_PREVALENCE:
            vals[i] = states[i + 1, 2]
        elif code == CODE_CUMULATIVE:
            vals[i] = states[i + 1, 4]
        else:
            vals[i] = states[i + 1, 4] - states[i, 4]
    return vals


@njit(cache=True)
def relative_sq_sum(data, model, floor):
    """Sum of squared residuals, each scaled by the model value (floored)."""
    total = 0.0
    for i in range(data.shape[0]):
        denom = model[i] if model[i] > floor else floor
        r = (data[i] - model[i]) / denom
        total += r * r
    return total


@njit(cache=True)
def objective_value(beta, gamma, alpha, y0, times, data, code, floor, rtol, atol, max_steps):
    """Relative least-squares misfit of the model at (beta, gamma, alpha).

    `times` carries a leading 0 entry; `data` is aligned to times[1:].
    Returns (value, status); status is nonzero when integration failed,
    in which case value is meaningless.
    """
    states, status, _ = integrate_grid(beta, gamma, alpha, y0, times, rtol, atol, 0, max_steps)
    if status != STATUS_OK:
        return 0.0, status
    model = observable_values(states, code)
    return relative_sq_sum(data, model, floor), STATUS_OK


def warm_up():
    """Trigger JIT compilation of all kernels (cached on disk afterwards)."""
    y0 = np.array([990.0, 0.0, 10.0, 0.0, 10.0])
    times = np.array([0.0, 1.0, 2.0])
    y0a = np.zeros(20)
    y0a[:5] = y0
    integrate_grid(1e-4, 0.2, 0.03, y0a, times, 1e-6, 1e-8, 3, 1000)
    objective_value(1e-4, 0.2, 0.03, y0, times, np.array([10.0, 10.0]),
                    CODE_PREVALENCE, 1e-8, 1e-6, 1e-8, 1000)
