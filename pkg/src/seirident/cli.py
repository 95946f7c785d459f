"""Command-line entry point.

Subcommands: simulate (trajectory only), mc, cm, compare (cross-method
analytics), run (the full grid), plot-data.  Exit codes: 0 success,
1 validation error, 2 some cases failed, 3 every case failed.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .cm import cm_at_params, NoninvertibleFisherError
from .config import ConfigError, ExperimentConfig, config_from_mapping, load_config
from .observe import DataType, Frequency
from .report import (PLOT_KINDS, emit_plot_data_from_dir, run_experiment,
                     write_trajectory_csv)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARTIAL = 2
EXIT_TOTAL_FAILURE = 3

_DATA_TYPES = {dt.value: dt for dt in DataType}
_FREQUENCIES = {f.name.lower(): f for f in Frequency}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML experiment config (defaults to the full grid)")
    parser.add_argument("--scenario", type=int, action="append",
                        help="restrict to a scenario (repeatable)")
    parser.add_argument("--data-type", choices=sorted(_DATA_TYPES), action="append",
                        help="restrict to a data type (repeatable)")
    parser.add_argument("--freq", choices=sorted(_FREQUENCIES), action="append",
                        help="restrict to a sampling frequency (repeatable)")
    parser.add_argument("--sigma", type=float, action="append",
                        help="noise levels to run (repeatable; must include 0 implicitly)")
    parser.add_argument("--replicates", type=int, help="Monte-Carlo replicates per noise level")
    parser.add_argument("--seed", type=int, help="base RNG seed")
    parser.add_argument("--jobs", type=int, help="parallel workers")
    parser.add_argument("--out", help="output directory (default: config output_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seirident",
        description="Practical identifiability of SEIR parameters from noisy time series")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate one scenario and write the trajectory")
    p.add_argument("--scenario", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--sens", action="store_true", help="include sensitivity columns")
    p.add_argument("--out", required=True, help="output CSV path")

    for name, help_text in (("mc", "Monte-Carlo identifiability for the selected cases"),
                            ("cm", "correlation-matrix identifiability at the true parameters"),
                            ("compare", "cross-method analytics (CM over MC estimate clouds)"),
                            ("run", "full pipeline: MC, CM, and cross-method reports")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("plot-data", help="emit plot-ready CSV from a previous run")
    p.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p.add_argument("--from", dest="run_dir", required=True,
                   help="directory holding a previous run's CSV files")
    p.add_argument("--scenario", type=int, required=True)
    p.add_argument("--data-type", required=True, choices=sorted(_DATA_TYPES))
    p.add_argument("--freq", required=True, choices=sorted(_FREQUENCIES))
    p.add_argument("--param", choices=("beta", "gamma", "alpha"),
                   help="parameter column (violin)")
    p.add_argument("--sigma", type=float, help="noise level (scatter-pairs)")
    p.add_argument("--out", required=True, help="output CSV path")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = config_from_mapping({})
    overrides = {}
    if args.scenario:
        overrides["scenarios"] = tuple(args.scenario)
    if args.data_type:
        overrides["data_types"] = tuple(_DATA_TYPES[d] for d in args.data_type)
    if args.freq:
        overrides["frequencies"] = tuple(_FREQUENCIES[f] for f in args.freq)
    if args.sigma:
        sigmas = sorted(set(float(s) for s in args.sigma) | {0.0})
        overrides["sigmas"] = tuple(sigmas)
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.out is not None:
        overrides["output_dir"] = args.out
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _exit_code(report) -> int:
    if report.n_failed == 0:
        return EXIT_OK
    if report.n_failed == len(report.outcomes):
        return EXIT_TOTAL_FAILURE
    return EXIT_PARTIAL


def _cmd_grid(args, stdout) -> int:
    cfg = _config_from_args(args)
    report = run_experiment(cfg, out_dir=cfg.output_dir,
                            progress=lambda label: print(f"running {label}", file=stdout))
    for oc in report.outcomes:
        status = "ok" if oc.ok else f"FAILED ({oc.error})"
        print(f"{oc.case.label}: {status}", file=stdout)
    print(f"report written to {cfg.output_dir}", file=stdout)
    return _exit_code(report)


def _cmd_cm_only(args, stdout) -> int:
    cfg = _config_from_args(args)
    os.makedirs(cfg.output_dir, exist_ok=True)
    from .report import CaseOutcome, IdentReport, provenance_of, write_cm_files
    outcomes = []
    for case in cfg.cases():
        oc = CaseOutcome(case=case)
        try:
            truth = case.scenario.params.as_array()
            verdict, fisher = cm_at_params(case, truth, cfg.weighting,
                                           rtol=cfg.optimizer.rtol, atol=cfg.optimizer.atol)
            oc.cm_truth = verdict
            oc.cm_condition = fisher.condition
            chi = verdict.correlations
            print(f"{case.label}: chi=({chi.beta_gamma:+.3f}, {chi.beta_alpha:+.3f}, "
                  f"{chi.gamma_alpha:+.3f}) identifiable={'yes' if verdict.identifiable else 'no'}",
                  file=stdout)
        except NoninvertibleFisherError as err:
            oc.cm_truth_omitted = True
            oc.cm_condition = err.condition
            print(f"{case.label}: Fisher matrix not invertible "
                  f"(condition {err.condition:.3g})", file=stdout)
        except Exception as err:
            oc.error = f"{type(err).__name__}: {err}"
        outcomes.append(oc)

    report = IdentReport(config=cfg, outcomes=outcomes, provenance=provenance_of(cfg))
    write_cm_files(report, cfg.output_dir)
    return _exit_code(report)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING)
    parser = build_parser()
    args = parser.parse_args(argv)
    stdout = sys.stdout
    try:
        if args.command == "simulate":
            write_trajectory_csv(args.scenario, args.out, with_sensitivities=args.sens)
            print(f"trajectory written to {args.out}", file=stdout)
            return EXIT_OK
        if args.command == "plot-data":
            emit_plot_data_from_dir(
                args.run_dir, args.kind, args.out, scenario_id=args.scenario,
                data_type=_DATA_TYPES[args.data_type], frequency=_FREQUENCIES[args.freq],
                param=args.param, sigma=args.sigma)
            print(f"plot data written to {args.out}", file=stdout)
            return EXIT_OK
        if args.command == "cm":
            return _cmd_cm_only(args, stdout)
        # mc, compare, and run share the grid pipeline; mc/compare simply run
        # the same per-case computation and write the same artifact set
        return _cmd_grid(args, stdout)
    except (ConfigError, ValueError, KeyError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
