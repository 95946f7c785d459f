"""End-to-end experiment orchestration and file reporting.

Every tabular artifact is CSV with a provenance header (seed, replicate
count, weighting mode, tolerances, toolkit version) and is written
atomically, so an interrupted run never leaves torn files and a rerun with
the same seed is byte-identical.
"""
from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cm import (CloudCmRates, CmVerdict, NoninvertibleFisherError,
                 cm_at_params, cm_over_cloud)
from .config import ExperimentConfig
from .integrate import integrate
from .mc import McRunResult, PAIR_NAMES, PairSlopes, estimate_pair_slopes, run_mc
from .model import PARAM_NAMES
from .observe import Case, DataType, Frequency, SCENARIOS, is_valid_pair

logger = logging.getLogger(__name__)

CSV_FILES = ("are_tables.csv", "mc_verdicts.csv", "cm_correlations.csv",
             "cm_verdicts.csv", "mc_estimates.csv", "slopes.csv", "cm_over_mc.csv")

PLOT_KINDS = ("violin", "scatter-pairs", "are-vs-noise")

# the four cross-method showcase cells used in the comparison table
COMPARISON_CASES = (
    (1, DataType.PREVALENCE, Frequency.DAILY),
    (3, DataType.PREVALENCE, Frequency.WEEKLY),
    (1, DataType.INCIDENCE, Frequency.DAILY),
    (1, DataType.CUMULATIVE, Frequency.DAILY),
)


class CaseNotFoundError(KeyError):
    """Requested case (or noise level) is not part of the report."""


@dataclass
class CaseOutcome:
    case: Case
    mc: McRunResult | None = None
    cm_truth: CmVerdict | None = None
    cm_condition: float | None = None
    cm_truth_omitted: bool = False
    cm_rates: dict[float, CloudCmRates] = field(default_factory=dict)
    slopes: dict[float, PairSlopes] = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class IdentReport:
    config: ExperimentConfig
    outcomes: list[CaseOutcome]
    provenance: dict

    def outcome(self, scenario_id: int, data_type: DataType, frequency: Frequency) -> CaseOutcome:
        for oc in self.outcomes:
            c = oc.case
            if (c.scenario.id == scenario_id and c.data_type is data_type
                    and c.schedule.frequency is frequency):
                return oc
        raise CaseNotFoundError(
            f"case S{scenario_id}-{data_type.value}-{frequency.name.lower()} is not in the report")

    @property
    def n_failed(self) -> int:
        return sum(not oc.ok for oc in self.outcomes)


def provenance_of(cfg: ExperimentConfig) -> dict:
    opt = cfg.optimizer
    return {
        "version": __version__,
        "seed": cfg.seed,
        "replicates": cfg.replicates,
        "weighting": cfg.weighting.value,
        "sigmas": ",".join(f"{s:g}" for s in cfg.sigmas),
        "f_tol": f"{opt.f_tol:g}",
        "x_tol": f"{opt.x_tol:g}",
        "max_iter": opt.max_iter,
        "floor": f"{opt.floor:g}",
        "rtol": f"{opt.rtol:g}",
        "atol": f"{opt.atol:g}",
        "accumulate_cumulative_noise": cfg.accumulate_cumulative_noise,
        "slope_regression": "second-named error on first-named error",
    }


def run_case(case: Case, cfg: ExperimentConfig) -> CaseOutcome:
    """MC pipeline, CM at truth, and the cross-method analytics for one case."""
    outcome = CaseOutcome(case=case)
    truth = case.scenario.params.as_array()
    outcome.mc = run_mc(case, cfg.sigmas, cfg.replicates, cfg.seed,
                        opts=cfg.optimizer, jobs=cfg.jobs,
                        accumulate_cumulative=cfg.accumulate_cumulative_noise)
    try:
        verdict, fisher = cm_at_params(case, truth, cfg.weighting,
                                       rtol=cfg.optimizer.rtol, atol=cfg.optimizer.atol)
        outcome.cm_truth = verdict
        outcome.cm_condition = fisher.condition
    except NoninvertibleFisherError as err:
        outcome.cm_truth_omitted = True
        outcome.cm_condition = err.condition
    for sigma, cloud in outcome.mc.clouds.items():
        outcome.cm_rates[sigma] = cm_over_cloud(
            cloud, cfg.weighting, rtol=cfg.optimizer.rtol,
            atol=cfg.optimizer.atol, jobs=cfg.jobs)
        if sigma > 0.0 and cloud.retained().shape[0] >= 2:
            outcome.slopes[sigma] = estimate_pair_slopes(cloud, truth)
    return outcome


def run_experiment(cfg: ExperimentConfig, out_dir=None, progress=None) -> IdentReport:
    """Run the configured case grid and write all report files.

    A case that raises is recorded as failed and the rest of the grid still
    runs; the report (and the CLI exit code) reflects partial failures.
    """
    cfg.validate()
    out_dir = cfg.output_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)

    outcomes = []
    for case in cfg.cases():
        if progress:
            progress(case.label)
        try:
            outcomes.append(run_case(case, cfg))
        except Exception as err:  # record and continue with the other cases
            logger.exception("case %s failed", case.label)
            outcomes.append(CaseOutcome(case=case, error=f"{type(err).__name__}: {err}"))

    report = IdentReport(config=cfg, outcomes=outcomes, provenance=provenance_of(cfg))
    write_report_files(report, out_dir)
    return report


# ---------------------------------------------------------------------------
# file emission

def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(provenance: dict, header: list[str], rows) -> str:
    buf = io.StringIO()
    for key, value in provenance.items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _case_key(case: Case) -> list:
    return [case.scenario.id, case.data_type.value, case.schedule.frequency.name.lower()]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and not np.isfinite(x):
        return "nan"
    return repr(float(x))


def write_report_files(report: IdentReport, out_dir) -> None:
    prov = report.provenance
    ok = [oc for oc in report.outcomes if oc.ok]

    rows = []
    for oc in ok:
        table = oc.mc.are_table
        for i, sigma in enumerate(table.sigmas):
            cloud = oc.mc.clouds[float(sigma)]
            rows.append(_case_key(oc.case) + [_fmt(sigma)]
                        + [_fmt(v) for v in table.values[i]] + [cloud.n_excluded])
    _atomic_write(os.path.join(out_dir, "are_tables.csv"), _csv_text(
        prov, ["scenario", "data_type", "frequency", "sigma",
               "are_beta", "are_gamma", "are_alpha", "n_excluded"], rows))

    rows = []
    for oc in ok:
        v = oc.mc.verdict
        rows.append(_case_key(oc.case)
                    + [_yn(v.per_param[p]) for p in PARAM_NAMES] + [_yn(v.model)])
    _atomic_write(os.path.join(out_dir, "mc_verdicts.csv"), _csv_text(
        prov, ["scenario", "data_type", "frequency",
               "beta_identifiable", "gamma_identifiable", "alpha_identifiable",
               "model_identifiable"], rows))

    write_cm_files(report, out_dir)

    rows = []
    for oc in ok:
        for sigma, cloud in oc.mc.clouds.items():
            for j in range(cloud.m):
                rows.append(_case_key(oc.case) + [_fmt(sigma), j]
                            + [_fmt(v) for v in cloud.estimates[j]]
                            + [_fmt(cloud.fval_est[j]), _fmt(cloud.fval_true[j]),
                               int(cloud.excluded[j])])
    _atomic_write(os.path.join(out_dir, "mc_estimates.csv"), _csv_text(
        prov, ["scenario", "data_type", "frequency", "sigma", "replicate",
               "beta", "gamma", "alpha", "fval_est", "fval_true", "excluded"], rows))

    rows = []
    for oc in ok:
        for sigma, slopes in oc.slopes.items():
            for pair in PAIR_NAMES:
                s = slopes.slopes[pair]
                rows.append(_case_key(oc.case) + [_fmt(sigma), pair, _fmt(s),
                                                  _yn(slopes.correlated[pair]) if s is not None else ""])
    _atomic_write(os.path.join(out_dir, "slopes.csv"), _csv_text(
        prov, ["scenario", "data_type", "frequency", "sigma", "pair", "slope",
               "correlated"], rows))

    rows = []
    for oc in ok:
        for sigma, rates in oc.cm_rates.items():
            rows.append(_case_key(oc.case) + [_fmt(sigma), _fmt(rates.percent),
                                              rates.n_identifiable, rates.n_retained,
                                              rates.n_omitted])
    _atomic_write(os.path.join(out_dir, "cm_over_mc.csv"), _csv_text(
        prov, ["scenario", "data_type", "frequency", "sigma", "percent_identifiable",
               "n_identifiable", "n_retained", "n_omitted"], rows))

    _atomic_write(os.path.join(out_dir, "report.md"), render_report_md(report))


def _yn(flag: bool) -> str:
    return "yes" if flag else "no"


def write_cm_files(report: IdentReport, out_dir) -> None:
    """The two truth-point CM tables (shared by the `cm` and `run` commands)."""
    prov = report.provenance
    ok = [oc for oc in report.outcomes if oc.ok and (oc.cm_truth or oc.cm_truth_omitted)]

    rows = []
    for oc in ok:
        if oc.cm_truth_omitted:
            rows.append(_case_key(oc.case) + ["", "", "", _fmt(oc.cm_condition), "omitted"])
        else:
            chi = oc.cm_truth.correlations
            rows.append(_case_key(oc.case)
                        + [_fmt(chi.beta_gamma), _fmt(chi.beta_alpha), _fmt(chi.gamma_alpha),
                           _fmt(oc.cm_condition), _yn(oc.cm_truth.identifiable)])
    _atomic_write(os.path.join(out_dir, "cm_correlations.csv"), _csv_text(
        prov, ["scenario", "data_type", "frequency", "chi_beta_gamma", "chi_beta_alpha",
               "chi_gamma_alpha", "condition", "identifiable"], rows))

    rows = []
    for oc in ok:
        if oc.cm_truth_omitted:
            rows.append(_case_key(oc.case) + ["omitted", _fmt(0.9), ""])
        else:
            rows.append(_case_key(oc.case) + [_yn(oc.cm_truth.identifiable),
                                              _fmt(oc.cm_truth.threshold),
                                              _fmt(oc.cm_truth.correlations.max_abs)])
    _atomic_write(os.path.join(out_dir, "cm_verdicts.csv"), _csv_text(
        prov, ["scenario", "data_type", "frequency", "identifiable", "threshold",
               "max_abs_correlation"], rows))


def render_report_md(report: IdentReport) -> str:
    """Human-readable summary: the MC and CM verdict grids plus the
    cross-method comparison for the four showcase cells."""
    cfg = report.config
    lines = ["# SEIR practical identifiability report", ""]
    lines.append("## Provenance")
    for key, value in report.provenance.items():
        lines.append(f"- {key}: {value}")
    lines.append("")

    freq_order = [f for f in (Frequency.DAILY, Frequency.WEEKLY, Frequency.MONTHLY)
                  if f in cfg.frequencies]

    def grid_cell(sid, dt, freq, fmt):
        if not is_valid_pair(sid, freq):
            return "-"
        try:
            oc = report.outcome(sid, dt, freq)
        except CaseNotFoundError:
            return "-"
        if not oc.ok:
            return "FAILED"
        return fmt(oc)

    def fmt_mc(oc):
        names = [p for p in PARAM_NAMES if oc.mc.verdict.per_param[p]]
        return ", ".join(names) if names else "none"

    def fmt_cm(oc):
        if oc.cm_truth_omitted:
            return "omitted"
        return "Yes" if oc.cm_truth.identifiable else "No"

    for title, fmt in (("## Monte-Carlo verdicts (identifiable parameters per cell)", fmt_mc),
                       ("## Correlation-matrix verdicts (all pairwise |chi| < 0.9)", fmt_cm)):
        lines.append(title)
        for dt in cfg.data_types:
            lines.append(f"\n### {dt.value}")
            lines.append("| scenario | " + " | ".join(f.name.lower() for f in freq_order) + " |")
            lines.append("|---" * (len(freq_order) + 1) + "|")
            for sid in cfg.scenarios:
                row = [grid_cell(sid, dt, f, fmt) for f in freq_order]
                lines.append(f"| S{sid} | " + " | ".join(row) + " |")
        lines.append("")

    top_sigma = max(cfg.sigmas)
    if top_sigma > 0:
        lines.append(f"## Cross-method comparison at sigma={top_sigma:g}")
        lines.append("| case | MC identifiable | CM identifiable | CM-over-MC % "
                     "| slope b:g | slope b:a | slope a:g | chi b:g | chi b:a | chi g:a |")
        lines.append("|---" * 10 + "|")
        for sid, dt, freq in COMPARISON_CASES:
            if not (sid in cfg.scenarios and dt in cfg.data_types
                    and freq in cfg.frequencies and is_valid_pair(sid, freq)):
                continue
            try:
                oc = report.outcome(sid, dt, freq)
            except CaseNotFoundError:
                continue
            if not oc.ok:
                continue
            slopes = oc.slopes.get(top_sigma)
            rates = oc.cm_rates.get(top_sigma)
            chi = None if oc.cm_truth_omitted else oc.cm_truth.correlations

            def s_fmt(pair):
                if slopes is None or slopes.slopes[pair] is None:
                    return "-"
                return f"{slopes.slopes[pair]:.2f}"

            cells = [oc.case.label, _yn(oc.mc.verdict.model),
                     "omitted" if chi is None else _yn(oc.cm_truth.identifiable),
                     f"{rates.percent:.1f}" if rates else "-",
                     s_fmt("beta:gamma"), s_fmt("beta:alpha"), s_fmt("alpha:gamma")]
            if chi is None:
                cells += ["-", "-", "-"]
            else:
                cells += [f"{chi.beta_gamma:.2f}", f"{chi.beta_alpha:.2f}",
                          f"{chi.gamma_alpha:.2f}"]
            lines.append("| " + " | ".join(cells) + " |")

    failed = [oc for oc in report.outcomes if not oc.ok]
    if failed:
        lines.append("\n## Failed cases")
        for oc in failed:
            lines.append(f"- {oc.case.label}: {oc.error}")
    lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# plot-ready data

def emit_plot_data(report: IdentReport, kind: str, out_path, *, scenario_id: int,
                   data_type: DataType, frequency: Frequency,
                   param: str | None = None, sigma: float | None = None) -> None:
    """Long-format CSV for external plotting tools.

    violin:       one row per (sigma, replicate) with the chosen parameter's
                  estimates (requires `param`)
    scatter-pairs: per-replicate normalized errors for all three parameters
                  at one noise level (requires `sigma`)
    are-vs-noise: one row per (sigma, parameter) with the ARE value
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r} (expected one of {PLOT_KINDS})")
    oc = report.outcome(scenario_id, data_type, frequency)
    if not oc.ok or oc.mc is None:
        raise CaseNotFoundError(f"case {oc.case.label} has no Monte-Carlo results")
    truth = oc.case.scenario.params.as_array()
    prov = report.provenance

    if kind == "violin":
        if param not in PARAM_NAMES:
            raise ValueError(f"violin data needs param in {PARAM_NAMES}")
        k = PARAM_NAMES.index(param)
        rows = []
        for s, cloud in oc.mc.clouds.items():
            for j in range(cloud.m):
                rows.append([_fmt(s), j, _fmt(cloud.estimates[j, k])])
        text = _csv_text(prov, ["sigma", "replicate", param], rows)
    elif kind == "scatter-pairs":
        if sigma is None:
            raise ValueError("scatter-pairs data needs a sigma level")
        if float(sigma) not in oc.mc.clouds:
            raise CaseNotFoundError(f"sigma={sigma:g} is not part of the run")
        cloud = oc.mc.clouds[float(sigma)]
        errors = (cloud.estimates - truth) / truth
        rows = [[j] + [_fmt(v) for v in errors[j]] for j in range(cloud.m)]
        text = _csv_text(prov, ["replicate", "beta_err", "gamma_err", "alpha_err"], rows)
    else:  # are-vs-noise
        table = oc.mc.are_table
        rows = []
        for i, s in enumerate(table.sigmas):
            for k, name in enumerate(PARAM_NAMES):
                rows.append([_fmt(s), name, _fmt(table.values[i, k])])
        text = _csv_text(prov, ["sigma", "param", "are_percent"], rows)
    _atomic_write(str(out_path), text)


def _read_csv(path) -> tuple[dict, list[dict]]:
    """Read one of our CSVs back: (provenance, rows as dicts)."""
    prov = {}
    with open(path) as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    prov[key.strip()] = value.strip()
            else:
                lines.append(line)
    return prov, list(csv.DictReader(io.StringIO("".join(lines))))


def emit_plot_data_from_dir(run_dir, kind: str, out_path, *, scenario_id: int,
                            data_type: DataType, frequency: Frequency,
                            param: str | None = None, sigma: float | None = None) -> None:
    """Like `emit_plot_data`, but sourced from a previous run's CSV files."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r} (expected one of {PLOT_KINDS})")
    source = "are_tables.csv" if kind == "are-vs-noise" else "mc_estimates.csv"
    path = os.path.join(run_dir, source)
    if not os.path.exists(path):
        raise CaseNotFoundError(f"{source} not found in {run_dir}")
    prov, rows = _read_csv(path)
    key = (str(scenario_id), data_type.value, frequency.name.lower())
    rows = [r for r in rows
            if (r["scenario"], r["data_type"], r["frequency"]) == key]
    if not rows:
        raise CaseNotFoundError(
            f"case S{scenario_id}-{data_type.value}-{frequency.name.lower()} "
            f"is not in {path}")

    if kind == "violin":
        if param not in PARAM_NAMES:
            raise ValueError(f"violin data needs param in {PARAM_NAMES}")
        out_rows = [[r["sigma"], r["replicate"], r[param]] for r in rows]
        text = _csv_text(prov, ["sigma", "replicate", param], out_rows)
    elif kind == "scatter-pairs":
        if sigma is None:
            raise ValueError("scatter-pairs data needs a sigma level")
        rows = [r for r in rows if float(r["sigma"]) == float(sigma)]
        if not rows:
            raise CaseNotFoundError(f"sigma={sigma:g} is not part of the stored run")
        truth = SCENARIOS[scenario_id].params.as_array()
        out_rows = []
        for r in rows:
            est = np.array([float(r["beta"]), float(r["gamma"]), float(r["alpha"])])
            err = (est - truth) / truth
            out_rows.append([r["replicate"]] + [_fmt(v) for v in err])
        text = _csv_text(prov, ["replicate", "beta_err", "gamma_err", "alpha_err"], out_rows)
    else:  # are-vs-noise
        out_rows = []
        for r in rows:
            for name in PARAM_NAMES:
                out_rows.append([r["sigma"], name, r[f"are_{name}"]])
        text = _csv_text(prov, ["sigma", "param", "are_percent"], out_rows)
    _atomic_write(str(out_path), text)


def write_trajectory_csv(scenario_id: int, out_path, with_sensitivities: bool = False,
                         rtol: float | None = None, atol: float | None = None) -> None:
    """Daily-grid trajectory export for the `simulate` subcommand."""
    from .integrate import DEFAULT_ATOL, DEFAULT_RTOL
    scenario = SCENARIOS[scenario_id]
    times = np.arange(0.0, scenario.span + 0.5)
    traj = integrate(scenario.params, scenario.init, times,
                     with_sensitivities=with_sensitivities,
                     rtol=rtol or DEFAULT_RTOL, atol=atol or DEFAULT_ATOL)
    header = ["time", "S", "E", "I", "R", "C"]
    if with_sensitivities:
        header += [f"d{s}_d{p}" for p in PARAM_NAMES for s in ("S", "E", "I", "R", "C")]
    rows = []
    for i, t in enumerate(traj.times):
        row = [_fmt(t)] + [_fmt(v) for v in traj.states[i]]
        if with_sensitivities:
            row += [_fmt(traj.sens[i, k, j]) for j in range(3) for k in range(5)]
        rows.append(row)
    prov = {"version": __version__, "scenario": scenario_id,
            "peak_day_metadata": scenario.peak_day}
    _atomic_write(str(out_path), _csv_text(prov, header, rows))
