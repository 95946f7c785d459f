"""Bound-constrained Nelder-Mead and the relative least-squares objective.

Bounds are enforced by a smooth sine reparameterization rather than
clipping: the simplex moves in an unconstrained space u, and every trial
point maps into the box by construction.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .integrate import DEFAULT_ATOL, DEFAULT_MAX_STEPS, DEFAULT_RTOL
from .model import Bounds, DEFAULT_BOUNDS
from .observe import Case, ObservationSeries, case_grid_times

logger = logging.getLogger(__name__)

PENALTY_VALUE = 1e12

DEFAULT_F_TOL = 1e-10
DEFAULT_X_TOL = 1e-8
DEFAULT_MAX_ITER = 2000
DEFAULT_FLOOR = 1e-8

# standard simplex coefficients: reflection, expansion, contraction, shrink
RHO, CHI, PSI, SIGMA = 1.0, 2.0, 0.5, 0.5


class Objective:
    """Relative least-squares misfit of the SEIR model against one noisy series.

    Callable on a parameter array (beta, gamma, alpha); the model output is
    evaluated at the series' own observation times.  Model values in the
    denominator are floored to keep near-zero incidence tails from blowing
    the quotient up.  An integration failure is logged and mapped to a large
    penalty so a simplex search retreats instead of crashing.
    """

    def __init__(self, case: Case, series: ObservationSeries, floor: float = DEFAULT_FLOOR,
                 rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                 bounds: Bounds = DEFAULT_BOUNDS, max_steps: int = DEFAULT_MAX_STEPS):
        if series.schedule != case.schedule or series.data_type is not case.data_type:
            raise ValueError("series does not belong to this case")
        self.case = case
        self.series = series
        self.floor = float(floor)
        self.rtol = float(rtol)
        self.atol = float(atol)
        self.bounds = bounds
        self.max_steps = int(max_steps)
        self._grid = case_grid_times(case)
        self._data = np.ascontiguousarray(series.values, dtype=float)
        self._y0 = case.scenario.init.as_array()
        self._code = case.data_type.code

    def __call__(self, params) -> float:
        p = np.asarray(params, float)
        assert self.bounds.contains(p), f"objective evaluated outside bounds: {p}"
        value, status = _kernels.objective_value(
            p[0], p[1], p[2], self._y0, self._grid, self._data, self._code,
            self.floor, self.rtol, self.atol, self.max_steps)
        if status != _kernels.STATUS_OK:
            logger.warning("integration failed at params %s (%s); returning penalty",
                           p, self.case.label)
            return PENALTY_VALUE
        return value


def objective_eval(params, objective: Objective) -> float:
    return objective(params)


def bound_transform(u, bounds) -> np.ndarray:
    """Map unconstrained coordinates into the box: lb + (ub-lb)*(sin(u)+1)/2."""
    lo, hi = _bound_arrays(bounds)
    u = np.asarray(u, float)
    return lo + (hi - lo) * (np.sin(u) + 1.0) / 2.0


def inverse_bound_transform(p, bounds) -> np.ndarray:
    """Pull a point inside the box back to unconstrained coordinates."""
    lo, hi = _bound_arrays(bounds)
    p = np.asarray(p, float)
    if np.any(p < lo) or np.any(p > hi):
        raise ValueError(f"point {p} lies outside the bounds")
    frac = 2.0 * (p - lo) / (hi - lo) - 1.0
    return np.arcsin(np.clip(frac, -1.0, 1.0))


def _bound_arrays(bounds) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(bounds, Bounds):
        return bounds.as_arrays()
    lo, hi = (np.asarray(b, float) for b in bounds)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ValueError("bounds must be two equal-length 1-d arrays")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
        raise ValueError("bounds must be finite with lower < upper")
    return lo, hi


@dataclass
class OptimResult:
    best_params: np.ndarray
    best_value: float
    iterations: int
    converged: bool
    termination_reason: str
    history: np.ndarray | None = None


def nelder_mead_bounded(objective, start, bounds=DEFAULT_BOUNDS, *,
                        f_tol: float = DEFAULT_F_TOL, x_tol: float = DEFAULT_X_TOL,
                        max_iter: int = DEFAULT_MAX_ITER,
                        record_history: bool = False) -> OptimResult:
    """Minimize `objective(p)` over a box, never evaluating outside it.

    The simplex lives in transformed coordinates; the start vertex keeps the
    exact starting point (the round trip through the transform is only
    accurate to ~1e-12, and a start at the optimum must be returned
    unchanged).  Initial vertices perturb each transformed coordinate by 5%
    (0.00025 when it is zero).  Convergence requires the simplex diameter to
    fall below x_tol and the value spread below f_tol, measured against the
    best vertex.  Hitting max_iter is reported, not raised.
    """
    lo, hi = _bound_arrays(bounds)
    start = np.asarray(start, float)
    if start.shape != lo.shape:
        raise ValueError("start point and bounds disagree on dimension")
    if np.any(start < lo) or np.any(start > hi):
        raise ValueError(f"start point {start} lies outside the bounds")
    n = start.size

    u = np.empty((n + 1, n))
    p = np.empty((n + 1, n))
    f = np.empty(n + 1)
    u[0] = inverse_bound_transform(start, (lo, hi))
    p[0] = start.copy()
    f[0] = objective(p[0])
    for k in range(n):
        v = u[0].copy()
        v[k] = v[k] * 1.05 if v[k] != 0.0 else 0.00025
        u[k + 1] = v
        p[k + 1] = bound_transform(v, (lo, hi))
        f[k + 1] = objective(p[k + 1])

    def reorder():
        order = np.argsort(f, kind="stable")
        return u[order], p[order], f[order]

    u, p, f = reorder()
    history = [f[0]] if record_history else None

    def trial(point_u):
        point_p = bound_transform(point_u, (lo, hi))
        return point_p, objective(point_p)

    iterations = 0
    converged = False
    while iterations < max_iter:
        if (np.max(np.abs(u[1:] - u[0])) <= x_tol
                and np.max(np.abs(f[1:] - f[0])) <= f_tol):
            converged = True
            break
        iterations += 1
        centroid = u[:-1].mean(axis=0)

        u_r = centroid + RHO * (centroid - u[-1])
        p_r, f_r = trial(u_r)
        if f_r < f[0]:
            u_e = centroid + RHO * CHI * (centroid - u[-1])
            p_e, f_e = trial(u_e)
            if f_e < f_r:
                u[-1], p[-1], f[-1] = u_e, p_e, f_e
            else:
                u[-1], p[-1], f[-1] = u_r, p_r, f_r
        elif f_r < f[-2]:
            u[-1], p[-1], f[-1] = u_r, p_r, f_r
        else:
            shrink = False
            if f_r < f[-1]:
                u_c = centroid + PSI * RHO * (centroid - u[-1])
                p_c, f_c = trial(u_c)
                if f_c <= f_r:
                    u[-1], p[-1], f[-1] = u_c, p_c, f_c
                else:
                    shrink = True
            else:
                u_c = centroid - PSI * (centroid - u[-1])
                p_c, f_c = trial(u_c)
                if f_c < f[-1]:
                    u[-1], p[-1], f[-1] = u_c, p_c, f_c
                else:
                    shrink = True
            if shrink:
                for k in range(1, n + 1):
                    u[k] = u[0] + SIGMA * (u[k] - u[0])
                    p[k], f[k] = trial(u[k])

        u, p, f = reorder()
        if record_history:
            history.append(f[0])

    reason = "converged" if converged else "max_iter"
    return OptimResult(best_params=p[0].copy(), best_value=float(f[0]),
                       iterations=iterations, converged=converged,
                       termination_reason=reason,
                       history=np.asarray(history) if record_history else None)
