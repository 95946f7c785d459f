"""Experiment configuration: a small YAML schema with validated defaults
that reproduce the reference case grid."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .cm import WeightingMode
from .mc import FitOptions
from .noise import DEFAULT_SIGMAS
from .observe import Case, DataType, Frequency, all_cases, is_valid_pair

DEFAULT_SEED = 1729
DEFAULT_REPLICATES = 500

_DATA_TYPE_KEYS = {dt.value: dt for dt in DataType}
_FREQUENCY_KEYS = {f.name.lower(): f for f in Frequency}
_WEIGHTING_KEYS = {m.value: m for m in WeightingMode}

_TOP_KEYS = {"scenarios", "data_types", "frequencies", "sigmas", "replicates",
             "seed", "weighting", "accumulate_cumulative_noise", "optimizer",
             "solver", "jobs", "output_dir"}
_OPTIMIZER_KEYS = {"f_tol", "x_tol", "max_iter", "floor"}
_SOLVER_KEYS = {"rtol", "atol"}


class ConfigError(ValueError):
    """Invalid experiment configuration; lists every problem found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))


@dataclass
class ExperimentConfig:
    scenarios: tuple[int, ...] = (1, 2, 3, 4)
    data_types: tuple[DataType, ...] = tuple(DataType)
    frequencies: tuple[Frequency, ...] = tuple(Frequency)
    sigmas: tuple[float, ...] = DEFAULT_SIGMAS
    replicates: int = DEFAULT_REPLICATES
    seed: int = DEFAULT_SEED
    weighting: WeightingMode = WeightingMode.INVERSE_SQUARE_OUTPUT
    accumulate_cumulative_noise: bool = False
    optimizer: FitOptions = field(default_factory=FitOptions)
    jobs: int = 1
    output_dir: str = "results"

    def cases(self) -> list[Case]:
        return all_cases(self.scenarios, self.data_types, self.frequencies)

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self) -> list[str]:
        problems = []
        for sid in self.scenarios:
            if sid not in (1, 2, 3, 4):
                problems.append(f"unknown scenario id {sid!r}")
        if len(self.scenarios) == 0:
            problems.append("no scenarios selected")
        if len(self.data_types) == 0:
            problems.append("no data types selected")
        if len(self.frequencies) == 0:
            problems.append("no frequencies selected")

        sig = np.asarray(self.sigmas, float)
        if sig.size == 0 or sig[0] != 0.0:
            problems.append("sigma list must start at 0")
        if np.any(sig < 0.0):
            problems.append("sigma values must be nonnegative")
        if np.any(np.diff(sig) <= 0.0):
            problems.append("sigma list must be sorted strictly ascending")
        if self.replicates < 1:
            problems.append("replicates must be at least 1")
        if self.jobs < 1:
            problems.append("jobs must be at least 1")
        if self.optimizer.max_iter < 1:
            problems.append("optimizer max_iter must be at least 1")
        for name in ("f_tol", "x_tol", "floor", "rtol", "atol"):
            if getattr(self.optimizer, name) <= 0.0:
                problems.append(f"optimizer {name} must be positive")

        # every requested scenario and frequency must contribute at least one
        # valid pair; asking only for impossible combinations is an error
        valid_scenarios = {sid for sid in self.scenarios if sid in (1, 2, 3, 4)}
        for sid in sorted(valid_scenarios):
            if not any(is_valid_pair(sid, f) for f in self.frequencies):
                problems.append(
                    f"scenario {sid} supports none of the requested frequencies "
                    f"({', '.join(f.name.lower() for f in self.frequencies)})")
        for f in self.frequencies:
            if not any(is_valid_pair(sid, f) for sid in valid_scenarios):
                problems.append(f"no requested scenario supports {f.name.lower()} sampling")
        return problems


def _parse_section(raw: dict, allowed: set[str], where: str, problems: list[str]) -> dict:
    unknown = set(raw) - allowed
    for key in sorted(unknown):
        problems.append(f"unknown key {key!r} in {where}")
    return {k: v for k, v in raw.items() if k in allowed}


def config_from_mapping(raw: dict | None) -> ExperimentConfig:
    """Build a validated config from parsed YAML (None/empty means defaults)."""
    raw = dict(raw or {})
    problems: list[str] = []
    top = _parse_section(raw, _TOP_KEYS, "config", problems)

    kwargs = {}
    if "scenarios" in top:
        kwargs["scenarios"] = tuple(int(s) for s in top["scenarios"])
    if "data_types" in top:
        dts = []
        for name in top["data_types"]:
            if str(name) not in _DATA_TYPE_KEYS:
                problems.append(f"unknown data type {name!r} "
                                f"(expected one of {sorted(_DATA_TYPE_KEYS)})")
            else:
                dts.append(_DATA_TYPE_KEYS[str(name)])
        kwargs["data_types"] = tuple(dts)
    if "frequencies" in top:
        freqs = []
        for name in top["frequencies"]:
            if str(name) not in _FREQUENCY_KEYS:
                problems.append(f"unknown frequency {name!r} "
                                f"(expected one of {sorted(_FREQUENCY_KEYS)})")
            else:
                freqs.append(_FREQUENCY_KEYS[str(name)])
        kwargs["frequencies"] = tuple(freqs)
    if "sigmas" in top:
        kwargs["sigmas"] = tuple(float(s) for s in top["sigmas"])
    for key in ("replicates", "seed", "jobs"):
        if key in top:
            kwargs[key] = int(top[key])
    if "weighting" in top:
        name = str(top["weighting"])
        if name not in _WEIGHTING_KEYS:
            problems.append(f"unknown weighting mode {name!r} "
                            f"(expected one of {sorted(_WEIGHTING_KEYS)})")
        else:
            kwargs["weighting"] = _WEIGHTING_KEYS[name]
    if "accumulate_cumulative_noise" in top:
        kwargs["accumulate_cumulative_noise"] = bool(top["accumulate_cumulative_noise"])
    if "output_dir" in top:
        kwargs["output_dir"] = str(top["output_dir"])

    opt_kwargs = {}
    if "optimizer" in top:
        section = _parse_section(dict(top["optimizer"] or {}), _OPTIMIZER_KEYS,
                                 "optimizer", problems)
        for key in ("f_tol", "x_tol", "floor"):
            if key in section:
                opt_kwargs[key] = float(section[key])
        if "max_iter" in section:
            opt_kwargs["max_iter"] = int(section["max_iter"])
    if "solver" in top:
        section = _parse_section(dict(top["solver"] or {}), _SOLVER_KEYS, "solver", problems)
        for key in ("rtol", "atol"):
            if key in section:
                opt_kwargs[key] = float(section[key])
    if opt_kwargs:
        kwargs["optimizer"] = FitOptions(**opt_kwargs)

    cfg = ExperimentConfig(**kwargs)
    problems += cfg.problems()
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read a YAML config file; an empty file yields the full default grid."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError([f"config root must be a mapping, got {type(raw).__name__}"])
    return config_from_mapping(raw)


def config_to_mapping(cfg: ExperimentConfig) -> dict:
    return {
        "scenarios": list(cfg.scenarios),
        "data_types": [dt.value for dt in cfg.data_types],
        "frequencies": [f.name.lower() for f in cfg.frequencies],
        "sigmas": [float(s) for s in cfg.sigmas],
        "replicates": cfg.replicates,
        "seed": cfg.seed,
        "weighting": cfg.weighting.value,
        "accumulate_cumulative_noise": cfg.accumulate_cumulative_noise,
        "optimizer": {
            "f_tol": cfg.optimizer.f_tol,
            "x_tol": cfg.optimizer.x_tol,
            "max_iter": cfg.optimizer.max_iter,
            "floor": cfg.optimizer.floor,
        },
        "solver": {"rtol": cfg.optimizer.rtol, "atol": cfg.optimizer.atol},
        "jobs": cfg.jobs,
        "output_dir": cfg.output_dir,
    }


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_mapping(cfg), fh, sort_keys=False)
