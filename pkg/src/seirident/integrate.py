"""Deterministic trajectory integration on caller-chosen output grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import N_PARAMS, N_STATES, State, _param_triple

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
DEFAULT_MAX_STEPS = 10_000_000

_STATUS_MESSAGES = {
    _kernels.STATUS_STEP_UNDERFLOW: "step size underflow (tolerances unattainable)",
    _kernels.STATUS_MAX_STEPS: "maximum step count exceeded",
}


class IntegrationError(RuntimeError):
    """Integration gave up before covering the requested grid."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:g}")
        self.time = time


@dataclass
class Trajectory:
    """Solution values on a strictly increasing grid that starts at t=0.

    `states` has shape (nt, 5) in (S, E, I, R, C) order.  When sensitivities
    were requested, `sens` has shape (nt, 5, 3): sens[i, k, j] is the
    derivative of state k with respect to parameter j at times[i].
    """

    times: np.ndarray
    states: np.ndarray
    sens: np.ndarray | None
    rtol: float
    atol: float

    def index_of(self, t: float) -> int:
        """Index of grid time t; raises if t is not on the grid."""
        i = int(np.searchsorted(self.times, t))
        if i < len(self.times) and abs(self.times[i] - t) <= 1e-9:
            return i
        if i > 0 and abs(self.times[i - 1] - t) <= 1e-9:
            return i - 1
        raise KeyError(f"time {t!r} is not on the trajectory grid")

    def covers(self, t: float) -> bool:
        return self.times[0] - 1e-9 <= t <= self.times[-1] + 1e-9


def integrate(params, init, output_times, with_sensitivities: bool = False,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
              max_steps: int = DEFAULT_MAX_STEPS) -> Trajectory:
    """Solve the SEIR system, evaluating exactly at `output_times`.

    `output_times` must be strictly increasing and nonnegative; a leading 0
    is prepended when absent, since the initial condition defines t=0.  With
    `with_sensitivities`, the forward sensitivity system is integrated as a
    20-dimensional augmentation of the state (initial sensitivities are zero:
    the initial condition does not depend on the parameters).

    Raises IntegrationError, carrying the failing time, if the step size
    underflows or the step budget is exhausted.
    """
    beta, gamma, alpha = _param_triple(params)
    y_init = init.as_array() if isinstance(init, State) else np.asarray(init, float)
    if y_init.shape != (N_STATES,):
        raise ValueError("initial state must have 5 components")
    if not np.all(np.isfinite(y_init)):
        raise ValueError("initial state components must be finite")
    if not (rtol > 0.0 and atol > 0.0):
        raise ValueError("tolerances must be positive")

    times = np.asarray(output_times, float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("output_times must be a nonempty 1-d sequence")
    if times[0] < 0.0:
        raise ValueError("output_times must start at or after 0")
    if np.any(np.diff(times) <= 0.0):
        raise ValueError("output_times must be strictly increasing")
    if times[0] > 0.0:
        times = np.concatenate([[0.0], times])
    times = np.ascontiguousarray(times)

    n_sens = N_PARAMS if with_sensitivities else 0
    if with_sensitivities:
        y0 = np.zeros(N_STATES + N_STATES * N_PARAMS)
        y0[:N_STATES] = y_init
    else:
        y0 = y_init.copy()

    values, status, t_fail = _kernels.integrate_grid(
        beta, gamma, alpha, y0, times, rtol, atol, n_sens, max_steps)
    if status != _kernels.STATUS_OK:
        raise IntegrationError(_STATUS_MESSAGES[status], t_fail)

    states = np.ascontiguousarray(values[:, :N_STATES])
    sens = None
    if with_sensitivities:
        # columns 5..19 hold d(state)/d(p_j) in parameter-major blocks of 5
        sens = values[:, N_STATES:].reshape(len(times), N_PARAMS, N_STATES)
        sens = np.ascontiguousarray(np.swapaxes(sens, 1, 2))
    return Trajectory(times=times, states=states, sens=sens, rtol=rtol, atol=atol)
