"""Synthetic noisy datasets: multiplicative Gaussian error with seeded,
independently regenerable replicate streams."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .integrate import DEFAULT_ATOL, DEFAULT_RTOL, integrate
from .observe import (Case, DataType, ObservationSeries, SamplingSchedule,
                      clean_case_series, observe)

DEFAULT_SIGMAS = (0.0, 0.01, 0.05, 0.10, 0.20, 0.30)


@dataclass(frozen=True)
class NoiseSpec:
    """Fractional measurement-error level: each value is scaled by (1 + eps)
    with eps ~ Normal(0, sigma).  sigma is the standard deviation."""

    sigma: float

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")


def add_noise(clean: ObservationSeries, noise: NoiseSpec, rng: np.random.Generator) -> ObservationSeries:
    """One noisy realization of a clean series.

    Each point gets an independent (1 + eps) factor.  Negative outputs are
    kept: the normal error model permits them, and clipping would bias the
    estimates downstream.
    """
    if clean.noise_level != 0.0:
        raise ValueError("input series must be clean (noise_level 0)")
    if noise.sigma == 0.0:
        values = clean.values.copy()
    else:
        eps = noise.sigma * rng.standard_normal(clean.values.shape[0])
        values = clean.values * (1.0 + eps)
    return ObservationSeries(clean.data_type, clean.schedule, values,
                             noise_level=noise.sigma)


def replicate_rng(case: Case, seed: int, replicate: int) -> np.random.Generator:
    """Independent stream for one replicate, regenerable in isolation.

    Keyed on the parent scenario (not the case's own), so the scenario-3/4
    replicates are literal truncations of the scenario-1/2 replicates.
    """
    key = (seed, case.parent.id, case.data_type.code,
           int(case.schedule.frequency), replicate)
    return np.random.default_rng(key)


@dataclass
class ReplicateSet:
    """M noisy copies of one case's clean series, as an (M, n) matrix."""

    case: Case
    sigma: float
    m: int
    seed: int
    clean: ObservationSeries
    values: np.ndarray

    def replicate(self, j: int) -> ObservationSeries:
        return ObservationSeries(self.case.data_type, self.case.schedule,
                                 self.values[j].copy(), noise_level=self.sigma)


def generate_replicates(case: Case, noise: NoiseSpec, m: int, seed: int,
                        accumulate_cumulative: bool = False,
                        rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> ReplicateSet:
    """M independent noisy datasets for a case, deterministic in (seed, j).

    Noise is drawn on the parent scenario's full-span series and truncated,
    so a scenario-3 replicate is the leading slice of the corresponding
    scenario-1 replicate.

    With `accumulate_cumulative`, cumulative-incidence data are instead built
    by noising the incidence increments and summing them (plus the known
    t=0 baseline).  That avoids the unrealistically large late-epidemic
    errors of noising C directly, at the price of serially dependent errors;
    it is off by default to match the reference protocol.
    """
    if m < 1:
        raise ValueError("replicate count must be at least 1")
    parent_schedule = SamplingSchedule(case.schedule.frequency, case.parent.span)
    n = case.schedule.n
    n_parent = parent_schedule.n
    clean = clean_case_series(case, rtol=rtol, atol=atol)

    accumulate = accumulate_cumulative and case.data_type is DataType.CUMULATIVE
    grid = np.concatenate([[0.0], parent_schedule.times])
    traj = integrate(case.parent.params, case.parent.init, grid, rtol=rtol, atol=atol)
    base_type = DataType.INCIDENCE if accumulate else case.data_type
    parent_base = observe(traj, base_type, parent_schedule).values
    baseline = case.parent.init.C

    values = np.empty((m, n))
    for j in range(m):
        if noise.sigma == 0.0:
            noisy = parent_base
        else:
            eps = noise.sigma * replicate_rng(case, seed, j).standard_normal(n_parent)
            noisy = parent_base * (1.0 + eps)
        if accumulate:
            values[j] = baseline + np.cumsum(noisy)[:n]
        else:
            values[j] = noisy[:n]
    return ReplicateSet(case, noise.sigma, m, seed, clean, values)


def replicates_to_csv(reps: ReplicateSet, path, header_lines: tuple[str, ...] = ()) -> None:
    """Audit export: one row per (replicate, time)."""
    times = reps.case.schedule.times
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["replicate", "time", "value"])
        for j in range(reps.m):
            for i, t in enumerate(times):
                writer.writerow([j, repr(float(t)), repr(float(reps.values[j, i]))])
