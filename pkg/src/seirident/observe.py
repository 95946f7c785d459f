"""Observable data types, sampling schedules, and the outbreak scenarios."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .integrate import DEFAULT_ATOL, DEFAULT_RTOL, Trajectory, integrate
from .model import Params, State, initial_state


class DataType(enum.Enum):
    """The three observable series derivable from a trajectory."""

    PREVALENCE = "prevalence"
    INCIDENCE = "incidence"
    CUMULATIVE = "cumulative"

    @property
    def code(self) -> int:
        return _DTYPE_CODES[self]


_DTYPE_CODES = {
    DataType.PREVALENCE: _kernels.CODE_PREVALENCE,
    DataType.INCIDENCE: _kernels.CODE_INCIDENCE,
    DataType.CUMULATIVE: _kernels.CODE_CUMULATIVE,
}


class Frequency(enum.IntEnum):
    """Sampling interval in days."""

    DAILY = 1
    WEEKLY = 7
    MONTHLY = 30


@dataclass(frozen=True)
class SamplingSchedule:
    """Equally spaced observation times i*delta for i = 1..floor(span/delta).

    The first observation is at t=delta, not t=0: incidence needs a preceding
    interval, and the t=0 value is fixed by the initial condition anyway.
    """

    frequency: Frequency
    span: float

    def __post_init__(self):
        if self.span <= 0:
            raise ValueError("span must be positive")

    @property
    def delta(self) -> float:
        return float(int(self.frequency))

    @property
    def n(self) -> int:
        return int(math.floor(self.span / self.delta + 1e-9))

    @property
    def times(self) -> np.ndarray:
        return self.delta * np.arange(1, self.n + 1, dtype=float)


@dataclass(frozen=True)
class Scenario:
    """A synthetic outbreak: true parameters, initial state, and data window.

    peak_day records where the prevalence curve crests (metadata; for the
    truncated scenarios 3 and 4 the peak lies outside the window).
    """

    id: int
    params: Params
    init: State
    span: float
    peak_day: int


DEFAULT_INIT = initial_state()

SCENARIOS: dict[int, Scenario] = {
    1: Scenario(1, Params(1e-4, 0.2, 0.03), DEFAULT_INIT, 365.0, 109),
    2: Scenario(2, Params(1e-3, 0.2, 0.03), DEFAULT_INIT, 50.0, 25),
    3: Scenario(3, Params(1e-4, 0.2, 0.03), DEFAULT_INIT, 100.0, 109),
    4: Scenario(4, Params(1e-3, 0.2, 0.03), DEFAULT_INIT, 20.0, 25),
}

# Scenarios 3 and 4 are observation windows onto the scenario-1 and -2
# outbreaks; their data are truncations of the parent series.
PARENT_SCENARIO = {1: 1, 2: 2, 3: 1, 4: 2}

# A (scenario, frequency) pair needs at least this many observations;
# fewer is rejected (scenario 2 monthly, scenario 4 weekly/monthly).
MIN_OBSERVATIONS = 3


class UnsupportedCaseError(ValueError):
    """Requested (scenario, frequency) pair has too few observation times."""


@dataclass(frozen=True)
class Case:
    """One experimental cell: a scenario observed as one data type at one frequency."""

    scenario: Scenario
    data_type: DataType
    schedule: SamplingSchedule

    @property
    def label(self) -> str:
        return f"S{self.scenario.id}-{self.data_type.value}-{self.schedule.frequency.name.lower()}"

    @property
    def parent(self) -> Scenario:
        return SCENARIOS[PARENT_SCENARIO[self.scenario.id]]


def is_valid_pair(scenario_id: int, frequency: Frequency) -> bool:
    span = SCENARIOS[scenario_id].span
    return math.floor(span / float(int(frequency)) + 1e-9) >= MIN_OBSERVATIONS


def build_case(scenario_id: int, data_type: DataType, frequency: Frequency) -> Case:
    """Resolve one cell of the experiment grid, rejecting invalid pairs."""
    if scenario_id not in SCENARIOS:
        raise ValueError(f"unknown scenario id {scenario_id!r}")
    scenario = SCENARIOS[scenario_id]
    if not is_valid_pair(scenario_id, frequency):
        raise UnsupportedCaseError(
            f"scenario {scenario_id} spans {scenario.span:g} days; "
            f"{frequency.name.lower()} sampling yields fewer than {MIN_OBSERVATIONS} observations")
    return Case(scenario, data_type, SamplingSchedule(frequency, scenario.span))


def all_cases(scenario_ids=(1, 2, 3, 4), data_types=tuple(DataType),
              frequencies=tuple(Frequency)) -> list[Case]:
    """Every valid case in the grid, in (data type, scenario, frequency) order."""
    cases = []
    for dt in data_types:
        for sid in scenario_ids:
            for freq in frequencies:
                if is_valid_pair(sid, freq):
                    cases.append(build_case(sid, dt, freq))
    return cases


@dataclass
class ObservationSeries:
    """Observable values aligned to a schedule; noise_level 0 means clean."""

    data_type: DataType
    schedule: SamplingSchedule
    values: np.ndarray
    noise_level: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.shape != (self.schedule.n,):
            raise ValueError("series length must match the schedule")


def observe(traj: Trajectory, data_type: DataType, schedule: SamplingSchedule) -> ObservationSeries:
    """Read one observable off a trajectory at the schedule's times.

    Pure subsampling: the trajectory must already contain every scheduled
    time (and t=0, which incidence differences against).  Prevalence is
    I(t_i), cumulative is C(t_i), incidence is C(t_i) - C(t_{i-1}).
    """
    times = schedule.times
    if not traj.covers(times[-1]):
        raise ValueError(
            f"schedule extends to t={times[-1]:g} but trajectory ends at t={traj.times[-1]:g}")
    idx = np.array([traj.index_of(t) for t in times])
    if data_type is DataType.PREVALENCE:
        values = traj.states[idx, 2]
    elif data_type is DataType.CUMULATIVE:
        values = traj.states[idx, 4]
    else:
        prev_idx = np.concatenate([[traj.index_of(0.0)], idx[:-1]])
        values = traj.states[idx, 4] - traj.states[prev_idx, 4]
    return ObservationSeries(data_type, schedule, values.copy(), noise_level=0.0)


def case_grid_times(case: Case) -> np.ndarray:
    """Observation times with the leading t=0 entry the solver grids use."""
    return np.concatenate([[0.0], case.schedule.times])


def clean_case_series(case: Case, rtol: float = DEFAULT_RTOL,
                      atol: float = DEFAULT_ATOL) -> ObservationSeries:
    """Noise-free data for a case, as the truncation of its parent scenario.

    Scenario 3/4 series are leading slices of the scenario 1/2 series rather
    than fresh simulations; the grid-clipped integrator makes the shared
    prefix bit-identical either way, and noise replicates reuse the same
    truncation (see `noise.generate_replicates`).
    """
    parent = case.parent
    parent_schedule = SamplingSchedule(case.schedule.frequency, parent.span)
    grid = np.concatenate([[0.0], parent_schedule.times])
    traj = integrate(parent.params, parent.init, grid, rtol=rtol, atol=atol)
    full = observe(traj, case.data_type, parent_schedule)
    return ObservationSeries(case.data_type, case.schedule,
                             full.values[:case.schedule.n], noise_level=0.0)
