"""SEIR dynamics with an auxiliary cumulative-infection class.

The model tracks five quantities: susceptible S, exposed E, infectious I,
recovered R, and the running total C of individuals that have ever been
infected.  C is bookkeeping, not a dynamical state: its rate equals the
inflow into E, so incidence and cumulative-incidence observables can be
read off a trajectory directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("beta", "gamma", "alpha")
STATE_NAMES = ("S", "E", "I", "R", "C")

N_PARAMS = 3
N_STATES = 5


@dataclass(frozen=True)
class Bounds:
    """Box bounds for the three rate parameters, in (beta, gamma, alpha) order."""

    lower: tuple[float, float, float] = (0.0, 0.0, 0.0)
    upper: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != (N_PARAMS,) or hi.shape != (N_PARAMS,):
            raise ValueError("bounds must have one (lower, upper) pair per parameter")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("each lower bound must be below its upper bound")

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lower, float), np.asarray(self.upper, float)

    def contains(self, values) -> bool:
        v = np.asarray(values, float)
        lo, hi = self.as_arrays()
        return bool(np.all(v >= lo) and np.all(v <= hi))


DEFAULT_BOUNDS = Bounds()


@dataclass(frozen=True)
class Params:
    """Rate parameters: transmission beta, progression gamma, recovery alpha.

    Units are per day (beta per individual per day).
    """

    beta: float
    gamma: float
    alpha: float

    def __post_init__(self):
        v = self.as_array()
        if not np.all(np.isfinite(v)):
            raise ValueError("parameters must be finite")
        if not np.all(v > 0.0):
            raise ValueError("all rates must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta, self.gamma, self.alpha], dtype=float)

    @classmethod
    def from_array(cls, values) -> "Params":
        b, g, a = np.asarray(values, float)
        return cls(float(b), float(g), float(a))


@dataclass(frozen=True)
class State:
    """Compartment counts at one instant, plus the cumulative-infection tally."""

    S: float
    E: float
    I: float
    R: float
    C: float

    def as_array(self) -> np.ndarray:
        return np.array([self.S, self.E, self.I, self.R, self.C], dtype=float)

    @classmethod
    def from_array(cls, values) -> "State":
        s, e, i, r, c = np.asarray(values, float)
        return cls(float(s), float(e), float(i), float(r), float(c))

    @property
    def population(self) -> float:
        return self.S + self.E + self.I + self.R


def initial_state(population: float = 1000.0, infectious: float = 10.0,
                  exposed: float = 0.0, recovered: float = 0.0) -> State:
    """Outbreak-start state: everyone susceptible except the index cases.

    C starts at the infectious count, i.e. the index cases count toward the
    cumulative total.  The defaults (N=1000, I0=10) are calibrated so the
    two reference outbreaks peak on days 108 and 24.
    """
    s0 = population - infectious - exposed - recovered
    return State(S=s0, E=exposed, I=infectious, R=recovered, C=infectious)


def seir_rhs(state, params) -> np.ndarray:
    """Time derivative of (S, E, I, R, C).

    Accepts a `State` or a length-5 array; returns a length-5 array.
    The S+E+I+R components sum to zero (closed population).
    """
    y = state.as_array() if isinstance(state, State) else np.asarray(state, float)
    if y.shape != (N_STATES,):
        raise ValueError("state must have 5 components")
    if not np.all(np.isfinite(y)):
        raise ValueError("state components must be finite")
    b, g, a = _param_triple(params)
    s, e, i = y[0], y[1], y[2]
    new_inf = b * s * i
    return np.array([-new_inf, new_inf - g * e, g * e - a * i, a * i, new_inf])


def seir_jacobian(state, params) -> np.ndarray:
    """Jacobian of the right-hand side with respect to the state (5x5)."""
    y = state.as_array() if isinstance(state, State) else np.asarray(state, float)
    b, g, a = _param_triple(params)
    s, i = y[0], y[2]
    jac = np.zeros((N_STATES, N_STATES))
    jac[0, 0] = -b * i
    jac[0, 2] = -b * s
    jac[1, 0] = b * i
    jac[1, 1] = -g
    jac[1, 2] = b * s
    jac[2, 1] = g
    jac[2, 2] = -a
    jac[3, 2] = a
    jac[4, 0] = b * i
    jac[4, 2] = b * s
    return jac


def parameter_jacobian(state, params) -> np.ndarray:
    """Explicit derivative of the right-hand side with respect to (beta, gamma, alpha), 5x3."""
    y = state.as_array() if isinstance(state, State) else np.asarray(state, float)
    s, e, i = y[0], y[1], y[2]
    si = s * i
    return np.array([
        [-si, 0.0, 0.0],
        [si, -e, 0.0],
        [0.0, e, -i],
        [0.0, 0.0, i],
        [si, 0.0, 0.0],
    ])


def sensitivity_rhs(state, sens, params) -> np.ndarray:
    """Time derivative of the state-sensitivity matrix d(state)/d(params).

    `sens` is the 5x3 matrix of current sensitivities; the result is the
    chain-rule product plus the explicit parameter derivative.  Its
    S, E, I, R rows sum to the zero row, and the C row is the negative of
    the S row.
    """
    m = np.asarray(sens, float)
    if m.shape != (N_STATES, N_PARAMS):
        raise ValueError(f"sensitivity block must be {N_STATES}x{N_PARAMS}, got {m.shape}")
    return seir_jacobian(state, params) @ m + parameter_jacobian(state, params)


def reproduction_number(params, population: float) -> float:
    """Basic reproduction number beta*N/alpha for a fully susceptible population."""
    b, _, a = _param_triple(params)
    if a == 0.0:
        raise ZeroDivisionError("recovery rate must be positive")
    return b * population / a


def _param_triple(params) -> tuple[float, float, float]:
    if isinstance(params, Params):
        return params.beta, params.gamma, params.alpha
    v = np.asarray(params, float)
    if v.shape != (N_PARAMS,):
        raise ValueError("params must have 3 components")
    return float(v[0]), float(v[1]), float(v[2])
