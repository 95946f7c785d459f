"""Monte-Carlo practical identifiability: fit every noisy replicate, compute
average relative estimation errors, and classify parameters against the
noise level."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from . import _kernels
from .integrate import DEFAULT_ATOL, DEFAULT_MAX_STEPS, DEFAULT_RTOL
from .model import Bounds, DEFAULT_BOUNDS, PARAM_NAMES
from .noise import NoiseSpec, generate_replicates
from .observe import Case, case_grid_times
from .optimize import (DEFAULT_F_TOL, DEFAULT_FLOOR, DEFAULT_X_TOL,
                       DEFAULT_MAX_ITER, PENALTY_VALUE, nelder_mead_bounded)

PAIR_NAMES = ("beta:gamma", "beta:alpha", "alpha:gamma")

# replicate fits are dispatched in fixed-size chunks so results do not
# depend on the worker count
FIT_CHUNK = 25


@dataclass(frozen=True)
class FitOptions:
    """Everything the per-replicate fit needs besides the data."""

    f_tol: float = DEFAULT_F_TOL
    x_tol: float = DEFAULT_X_TOL
    max_iter: int = DEFAULT_MAX_ITER
    floor: float = DEFAULT_FLOOR
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    bounds: Bounds = DEFAULT_BOUNDS
    max_steps: int = DEFAULT_MAX_STEPS


@dataclass
class EstimateCloud:
    """Parameter estimates from fitting M replicates of one (case, sigma) cell.

    fval_est / fval_true are the objective at the estimate and at the true
    parameters, both against the same noisy replicate.  `excluded` marks the
    replicates whose fit never found a feasible point (integration failure
    at every simplex vertex); they are kept out of the aggregates but the
    count is always reported.
    """

    case: Case
    sigma: float
    seed: int
    estimates: np.ndarray
    fval_est: np.ndarray
    fval_true: np.ndarray
    excluded: np.ndarray

    @property
    def m(self) -> int:
        return self.estimates.shape[0]

    @property
    def n_excluded(self) -> int:
        return int(self.excluded.sum())

    def retained(self) -> np.ndarray:
        return self.estimates[~self.excluded]


@dataclass
class AreTable:
    """Average relative estimation error (percent) per noise level and parameter."""

    case: Case
    sigmas: np.ndarray
    values: np.ndarray  # shape (len(sigmas), 3)


@dataclass
class McVerdict:
    per_param: dict[str, bool]
    model: bool


@dataclass
class McRunResult:
    case: Case
    clouds: dict[float, EstimateCloud]
    are_table: AreTable
    verdict: McVerdict


def compute_are(cloud_or_estimates, truth) -> np.ndarray:
    """Mean absolute relative deviation from truth, in percent, per parameter."""
    truth = np.asarray(truth, float)
    if np.any(truth == 0.0):
        raise ValueError("true parameter components must be nonzero")
    if isinstance(cloud_or_estimates, EstimateCloud):
        estimates = cloud_or_estimates.retained()
    else:
        estimates = np.asarray(cloud_or_estimates, float)
    if estimates.ndim != 2 or estimates.shape[0] < 1:
        raise ValueError("need at least one estimate")
    return 100.0 * np.mean(np.abs(estimates - truth) / np.abs(truth), axis=0)


def classify_mc(table: AreTable) -> McVerdict:
    """A parameter is identifiable when its ARE stays at or below the noise
    percentage at every positive noise level (the sigma=0 row is 0 ≤ 0 by
    construction and is excluded from the comparison)."""
    positive = table.sigmas > 0.0
    thresholds = 100.0 * table.sigmas[positive, None]
    ok = np.all(table.values[positive] <= thresholds, axis=0)
    per_param = {name: bool(flag) for name, flag in zip(PARAM_NAMES, ok)}
    return McVerdict(per_param=per_param, model=bool(np.all(ok)))


def _fit_chunk(grid, data_rows, code, y0, start, lo, hi, opts: FitOptions):
    """Fit a block of replicates; a module-level function so workers can pickle it."""
    m = data_rows.shape[0]
    est = np.empty((m, 3))
    fval = np.empty(m)
    for j in range(m):
        row = np.ascontiguousarray(data_rows[j])

        def fun(p):
            value, status = _kernels.objective_value(
                p[0], p[1], p[2], y0, grid, row, code,
                opts.floor, opts.rtol, opts.atol, opts.max_steps)
            return value if status == _kernels.STATUS_OK else PENALTY_VALUE

        result = nelder_mead_bounded(fun, start, (lo, hi), f_tol=opts.f_tol,
                                     x_tol=opts.x_tol, max_iter=opts.max_iter)
        est[j] = result.best_params
        fval[j] = result.best_value
    return est, fval


def fit_replicates(case: Case, values: np.ndarray, opts: FitOptions, jobs: int = 1):
    """Fit each row of `values` starting from the true parameters.

    Returns (estimates, fval_est).  Work is split into fixed-size chunks so
    the result is bitwise independent of `jobs`.
    """
    grid = case_grid_times(case)
    y0 = case.scenario.init.as_array()
    start = case.scenario.params.as_array()
    lo, hi = opts.bounds.as_arrays()
    code = case.data_type.code
    m = values.shape[0]
    chunks = [(i, min(i + FIT_CHUNK, m)) for i in range(0, m, FIT_CHUNK)]
    if jobs == 1 or len(chunks) == 1:
        parts = [_fit_chunk(grid, values[a:b], code, y0, start, lo, hi, opts)
                 for a, b in chunks]
    else:
        parts = Parallel(n_jobs=jobs)(
            delayed(_fit_chunk)(grid, values[a:b], code, y0, start, lo, hi, opts)
            for a, b in chunks)
    estimates = np.vstack([p[0] for p in parts])
    fval_est = np.concatenate([p[1] for p in parts])
    return estimates, fval_est


def run_mc(case: Case, sigmas=None, m: int = 500, seed: int = 0, *,
           opts: FitOptions = FitOptions(), jobs: int = 1,
           accumulate_cumulative: bool = False) -> McRunResult:
    """The full Monte-Carlo protocol for one case.

    For each noise level: generate M replicates, fit each starting from the
    true parameters, and record the estimate plus the objective values at
    the estimate and at truth.  Deterministic for a fixed seed at any job
    count.
    """
    from .noise import DEFAULT_SIGMAS
    sigmas = np.asarray(DEFAULT_SIGMAS if sigmas is None else sigmas, float)
    truth = case.scenario.params.as_array()
    clouds: dict[float, EstimateCloud] = {}
    are = np.empty((sigmas.size, 3))

    for i, sigma in enumerate(sigmas):
        reps = generate_replicates(case, NoiseSpec(float(sigma)), m, seed,
                                   accumulate_cumulative=accumulate_cumulative,
                                   rtol=opts.rtol, atol=opts.atol)
        clean = np.ascontiguousarray(reps.clean.values)
        if sigma == 0.0:
            # all replicates are bitwise identical: fit once and broadcast
            estimates, fval_est = fit_replicates(case, reps.values[:1], opts, jobs=1)
            estimates = np.repeat(estimates, m, axis=0)
            fval_est = np.repeat(fval_est, m)
        else:
            estimates, fval_est = fit_replicates(case, reps.values, opts, jobs=jobs)
        fval_true = np.array([
            _kernels.relative_sq_sum(np.ascontiguousarray(reps.values[j]), clean, opts.floor)
            for j in range(m)])
        excluded = fval_est >= PENALTY_VALUE
        cloud = EstimateCloud(case=case, sigma=float(sigma), seed=seed,
                              estimates=estimates, fval_est=fval_est,
                              fval_true=fval_true, excluded=excluded)
        clouds[float(sigma)] = cloud
        if excluded.all():
            are[i] = np.nan
        else:
            are[i] = compute_are(cloud, truth)

    table = AreTable(case=case, sigmas=sigmas, values=are)
    return McRunResult(case=case, clouds=clouds, are_table=table,
                       verdict=classify_mc(table))


@dataclass
class PairSlopes:
    """Least-squares slopes between normalized estimate errors.

    For each named pair "x:y", `slopes[pair]` is the slope of y's normalized
    error regressed on x's (None when x has zero variance); the pair counts
    as correlated when 0.5 <= |slope| <= 2.
    """

    slopes: dict[str, float | None]
    correlated: dict[str, bool]
    regression: str = "second-named error on first-named error"


_PAIR_INDICES = {"beta:gamma": (0, 1), "beta:alpha": (0, 2), "alpha:gamma": (2, 1)}


def estimate_pair_slopes(cloud: EstimateCloud, truth) -> PairSlopes:
    truth = np.asarray(truth, float)
    estimates = cloud.retained()
    if estimates.shape[0] < 2:
        raise ValueError("need at least two estimates to fit a slope")
    errors = (estimates - truth) / truth
    slopes: dict[str, float | None] = {}
    correlated: dict[str, bool] = {}
    for pair in PAIR_NAMES:
        ix, iy = _PAIR_INDICES[pair]
        x = errors[:, ix]
        y = errors[:, iy]
        var = np.mean((x - x.mean()) ** 2)
        if var == 0.0:
            slopes[pair] = None
            correlated[pair] = False
            continue
        slope = float(np.mean((x - x.mean()) * (y - y.mean())) / var)
        slopes[pair] = slope
        correlated[pair] = 0.5 <= abs(slope) <= 2.0
    return PairSlopes(slopes=slopes, correlated=correlated)


def normalized_fval(fval_true: float, fval_est: float) -> float | None:
    """Relative improvement of the estimate's fit over the truth's fit.

    Positive means the estimate fits the noisy data better than the true
    parameters.  Undefined when the truth fits exactly (sigma=0), reported
    as None.
    """
    if fval_true == 0.0:
        return None
    return (fval_true - fval_est) / fval_true
