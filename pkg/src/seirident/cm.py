"""Correlation-matrix practical identifiability: output sensitivities,
weighted Fisher information, and pairwise parameter correlations."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .integrate import DEFAULT_ATOL, DEFAULT_RTOL, IntegrationError, integrate
from .observe import Case, DataType, ObservationSeries, case_grid_times, clean_case_series

CM_THRESHOLD = 0.9
CONDITION_LIMIT = 1e12
WEIGHT_FLOOR = 1e-8

CM_PAIR_NAMES = ("beta:gamma", "beta:alpha", "gamma:alpha")

# chunking constant mirrors mc.FIT_CHUNK so cloud sweeps are jobs-invariant
CM_CHUNK = 50


class WeightingMode(enum.Enum):
    """How the diagonal weight matrix is built from the clean model outputs.

    INVERSE_SQUARE_OUTPUT (w_i = 1/g_i^2) is the generalized-least-squares
    weight for multiplicative noise and is the default: it reproduces the
    reference correlation tables, which the literal MODEL_OUTPUT weighting
    (w_i = g_i) does not (see tests/test_cm.py::test_weighting_mode_calibration).
    """

    INVERSE_SQUARE_OUTPUT = "inverse_square_output"
    MODEL_OUTPUT = "model_output"


class NoninvertibleFisherError(RuntimeError):
    """The weighted Fisher information matrix is numerically singular."""

    def __init__(self, condition: float):
        super().__init__(f"Fisher information matrix is not invertible "
                         f"(condition number {condition:.3g})")
        self.condition = condition


class DegenerateFimError(RuntimeError):
    """Inverse Fisher matrix has a nonpositive diagonal entry."""


@dataclass
class SensitivityMatrix:
    """d(observable)/d(params) at the observation times, one row per time."""

    case: Case
    params: np.ndarray
    matrix: np.ndarray  # shape (n, 3)


@dataclass
class FisherInverse:
    matrix: np.ndarray  # 3x3 inverse of F^T W F
    condition: float    # condition number of F^T W F
    mode: WeightingMode


@dataclass
class CorrelationMatrix:
    """Normalized off-diagonals of the inverse Fisher matrix, by pair."""

    beta_gamma: float
    beta_alpha: float
    gamma_alpha: float

    def as_array(self) -> np.ndarray:
        return np.array([self.beta_gamma, self.beta_alpha, self.gamma_alpha])

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.as_array())))


@dataclass
class CmVerdict:
    identifiable: bool
    correlations: CorrelationMatrix
    threshold: float


def sensitivity_matrix(case: Case, params, rtol: float = DEFAULT_RTOL,
                       atol: float = DEFAULT_ATOL) -> SensitivityMatrix:
    """Sensitivities of the case's observable to (beta, gamma, alpha).

    Prevalence rows are dI/dp at t_i, cumulative rows are dC/dp at t_i, and
    incidence rows are consecutive differences of dC/dp (equivalently the
    integral of the sensitivity of the infection inflow over each interval,
    since C' is that inflow).
    """
    p = np.asarray(params, float)
    grid = case_grid_times(case)
    traj = integrate(p, case.scenario.init, grid, with_sensitivities=True,
                     rtol=rtol, atol=atol)
    if case.data_type is DataType.PREVALENCE:
        rows = traj.sens[1:, 2, :]
    elif case.data_type is DataType.CUMULATIVE:
        rows = traj.sens[1:, 4, :]
    else:
        rows = np.diff(traj.sens[:, 4, :], axis=0)
    return SensitivityMatrix(case=case, params=p.copy(), matrix=np.ascontiguousarray(rows))


def _weights(clean_values: np.ndarray, mode: WeightingMode) -> np.ndarray:
    g = np.maximum(clean_values, WEIGHT_FLOOR)
    if mode is WeightingMode.INVERSE_SQUARE_OUTPUT:
        return 1.0 / g ** 2
    return g


def _weighted_fisher(F: np.ndarray, w: np.ndarray) -> np.ndarray:
    return F.T @ (w[:, None] * F)


def fisher_inverse(sens: SensitivityMatrix, clean: ObservationSeries,
                   mode: WeightingMode = WeightingMode.INVERSE_SQUARE_OUTPUT) -> FisherInverse:
    """Invert the weighted Fisher information built from the sensitivities.

    Raises NoninvertibleFisherError when the information matrix's condition
    number exceeds 1e12; callers sweeping estimate clouds record those as
    omissions rather than failures.
    """
    F = sens.matrix
    if clean.schedule != sens.case.schedule or F.shape[0] != clean.values.shape[0]:
        raise ValueError("sensitivity matrix and clean series must share the schedule")
    info = _weighted_fisher(F, _weights(clean.values, mode))
    condition = float(np.linalg.cond(info))
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise NoninvertibleFisherError(condition)
    return FisherInverse(matrix=np.linalg.inv(info), condition=condition, mode=mode)


def correlations(fisher: FisherInverse) -> CorrelationMatrix:
    """Pairwise parameter correlations chi_ij = IM_ij / sqrt(IM_ii * IM_jj)."""
    im = fisher.matrix
    diag = np.diag(im)
    if np.any(diag <= 0.0):
        raise DegenerateFimError(f"nonpositive diagonal in inverse Fisher matrix: {diag}")
    s = np.sqrt(diag)
    return CorrelationMatrix(
        beta_gamma=float(im[0, 1] / (s[0] * s[1])),
        beta_alpha=float(im[0, 2] / (s[0] * s[2])),
        gamma_alpha=float(im[1, 2] / (s[1] * s[2])),
    )


def classify_cm(corr: CorrelationMatrix, threshold: float = CM_THRESHOLD) -> CmVerdict:
    """Identifiable when every pairwise correlation magnitude is strictly below
    the threshold."""
    return CmVerdict(identifiable=bool(corr.max_abs < threshold),
                     correlations=corr, threshold=threshold)


def cm_at_params(case: Case, params, mode: WeightingMode = WeightingMode.INVERSE_SQUARE_OUTPUT,
                 threshold: float = CM_THRESHOLD, rtol: float = DEFAULT_RTOL,
                 atol: float = DEFAULT_ATOL,
                 clean: ObservationSeries | None = None) -> tuple[CmVerdict, FisherInverse]:
    """Full pipeline at one parameter point: sensitivities -> FIM -> verdict."""
    if clean is None:
        clean = clean_case_series(case, rtol=rtol, atol=atol)
    sens = sensitivity_matrix(case, params, rtol=rtol, atol=atol)
    fisher = fisher_inverse(sens, clean, mode)
    return classify_cm(correlations(fisher), threshold), fisher


@dataclass
class CloudCmRates:
    """CM verdicts swept over a Monte-Carlo estimate cloud."""

    case: Case
    sigma: float
    n_identifiable: int
    n_retained: int
    n_omitted: int

    @property
    def fraction(self) -> float:
        return self.n_identifiable / self.n_retained if self.n_retained else float("nan")

    @property
    def percent(self) -> float:
        return 100.0 * self.fraction


def _cm_flags_chunk(case: Case, estimates: np.ndarray, clean_values: np.ndarray,
                    mode: WeightingMode, threshold: float, rtol: float, atol: float):
    """Flags for a block of estimates: 1 identifiable, 0 not, -1 omitted."""
    clean = ObservationSeries(case.data_type, case.schedule, clean_values.copy())
    flags = np.empty(estimates.shape[0], dtype=np.int8)
    for j, est in enumerate(estimates):
        try:
            verdict, _ = cm_at_params(case, est, mode, threshold, rtol, atol, clean=clean)
            flags[j] = 1 if verdict.identifiable else 0
        except (NoninvertibleFisherError, DegenerateFimError, IntegrationError):
            # no verdict is computable for this estimate; report it as omitted
            flags[j] = -1
    return flags


def cm_over_cloud(cloud, mode: WeightingMode = WeightingMode.INVERSE_SQUARE_OUTPUT,
                  threshold: float = CM_THRESHOLD, rtol: float = DEFAULT_RTOL,
                  atol: float = DEFAULT_ATOL, jobs: int = 1) -> CloudCmRates:
    """Fraction of a cloud's estimates the CM criterion calls identifiable.

    Estimates with a noninvertible Fisher matrix are omitted from the
    denominator; the omission count is part of the result, not an error.
    """
    case = cloud.case
    estimates = cloud.retained()
    if estimates.shape[0] == 0:
        raise ValueError("estimate cloud is empty")
    clean_values = clean_case_series(case, rtol=rtol, atol=atol).values

    if np.all(estimates == estimates[0]):
        # degenerate cloud (the sigma=0 protocol): one evaluation decides all
        flags = np.repeat(_cm_flags_chunk(case, estimates[:1], clean_values,
                                          mode, threshold, rtol, atol),
                          estimates.shape[0])
    else:
        chunks = [(a, min(a + CM_CHUNK, estimates.shape[0]))
                  for a in range(0, estimates.shape[0], CM_CHUNK)]
        if jobs == 1 or len(chunks) == 1:
            parts = [_cm_flags_chunk(case, estimates[a:b], clean_values,
                                     mode, threshold, rtol, atol) for a, b in chunks]
        else:
            parts = Parallel(n_jobs=jobs)(
                delayed(_cm_flags_chunk)(case, estimates[a:b], clean_values,
                                         mode, threshold, rtol, atol)
                for a, b in chunks)
        flags = np.concatenate(parts)

    return CloudCmRates(case=case, sigma=cloud.sigma,
                        n_identifiable=int(np.sum(flags == 1)),
                        n_retained=int(np.sum(flags >= 0)),
                        n_omitted=int(np.sum(flags == -1)))
