"""Run configuration: flat key/value text format with repeated [step] sections.

Grammar (one statement per line, '#' starts a comment anywhere):

    key = value                 # global section until the first [step]
    [step]
    key = value                 # keys of one load step

Global keys
    output                      optional CSV path (CLI --output overrides)
    initial_phase               austenitic | twinned-martensite | explicit
    seed_fraction               interior seed per minority phase (default 0.01)
    explicit_lambda             l0,l1,l2,l3 (required iff initial_phase = explicit)
    initial_temperature_C       starting temperature
    lambda_projection           verbatim | unweighted-mean (default verbatim)
    params.<name>               material parameter override (MaterialParams field)
    solver.<name>               solver setting override (SolverSettings field)

Step keys
    label                       optional name
    increments                  integer >= 1
    theta_C                     target temperature (default: previous step's)
    eps_XX / sig_XX             per-component control: exactly one of eps_/sig_
                                for each XX in 11,22,33,12,13,23. eps_ pins the
                                strain component (tensor shear convention) to a
                                linearly ramped target, sig_ pins the stress
                                component (MPa). At least one component must be
                                strain-controlled.

Unknown keys are rejected; every error names the offending key.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import (
    MaterialParams,
    PROJECTION_UNWEIGHTED,
    PROJECTION_VERBATIM,
)
from .evolution import SolverSettings
from .state import MaterialState, austenitic_state, state_from_fractions, twinned_martensite_state

COMPONENTS = ("11", "22", "33", "12", "13", "23")
PHASE_PRESETS = ("austenitic", "twinned-martensite", "explicit")
PROJECTIONS = (PROJECTION_VERBATIM, PROJECTION_UNWEIGHTED)


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


@dataclass
class LoadStep:
    """One leg of the load path: per-component control mode and targets."""

    increments: int
    modes: tuple[str, ...]          # 'eps' or 'sig' per component
    targets: np.ndarray             # target value per component
    theta: float
    label: str = ""

    def __post_init__(self):
        if self.increments < 1:
            raise ConfigError(f"increments must be >= 1, got {self.increments}")
        if "eps" not in self.modes:
            raise ConfigError("each step needs at least one strain-controlled component")


@dataclass
class RunConfig:
    """Validated run configuration."""

    params: MaterialParams = field(default_factory=MaterialParams)
    settings: SolverSettings | None = None
    initial_phase: str = "austenitic"
    seed_fraction: float = 0.01
    explicit_lambda: np.ndarray | None = None
    theta0: float = 20.0
    projection: str = PROJECTION_VERBATIM
    steps: list[LoadStep] = field(default_factory=list)
    output: str | None = None

    def resolved_settings(self) -> SolverSettings:
        return self.settings if self.settings is not None else SolverSettings.for_params(self.params)

    def initial_state(self) -> MaterialState:
        if self.initial_phase == "austenitic":
            return austenitic_state(self.seed_fraction)
        if self.initial_phase == "twinned-martensite":
            return twinned_martensite_state(self.seed_fraction)
        return state_from_fractions(self.explicit_lambda)


def _parse_scalar(key: str, raw: str, kind=float):
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"key '{key}': cannot parse {raw!r} as {kind.__name__}") from exc


def _split_sections(text: str) -> tuple[dict, list[dict]]:
    globals_, steps = {}, []
    current = globals_
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[step]":
            steps.append({})
            current = steps[-1]
            continue
        if line.startswith("["):
            raise ConfigError(f"line {lineno}: unknown section {line!r}")
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in current:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        current[key] = value
    return globals_, steps


def _build_params(overrides: dict) -> MaterialParams:
    valid = {f.name for f in dataclasses.fields(MaterialParams)}
    values = {}
    for key, raw in overrides.items():
        if key not in valid:
            raise ConfigError(f"unknown key 'params.{key}'")
        values[key] = _parse_scalar(f"params.{key}", raw)
    try:
        return MaterialParams(**values)
    except ValueError as exc:
        raise ConfigError(f"invalid material parameters: {exc}") from exc


def _build_settings(overrides: dict, params: MaterialParams) -> SolverSettings:
    valid = {f.name for f in dataclasses.fields(SolverSettings)}
    values = {}
    for key, raw in overrides.items():
        if key not in valid:
            raise ConfigError(f"unknown key 'solver.{key}'")
        kind = int if key in ("max_iter", "bisect_max_iter", "bracket_max_doublings",
                              "max_outer") else float
        values[key] = _parse_scalar(f"solver.{key}", raw, kind)
    try:
        return SolverSettings.for_params(params, **values)
    except ValueError as exc:
        raise ConfigError(f"invalid solver settings: {exc}") from exc


def _build_step(section: dict, index: int, theta_prev: float) -> LoadStep:
    sec = dict(section)
    label = sec.pop("label", f"step{index}")
    if "increments" not in sec:
        raise ConfigError(f"step {index}: missing key 'increments'")
    increments = _parse_scalar("increments", sec.pop("increments"), int)
    theta = _parse_scalar("theta_C", sec.pop("theta_C")) if "theta_C" in sec else theta_prev

    modes, targets = [], []
    for comp in COMPONENTS:
        eps_key, sig_key = f"eps_{comp}", f"sig_{comp}"
        has_eps, has_sig = eps_key in sec, sig_key in sec
        if has_eps and has_sig:
            raise ConfigError(f"step {index}: both '{eps_key}' and '{sig_key}' given")
        if not has_eps and not has_sig:
            raise ConfigError(f"step {index}: missing '{eps_key}' or '{sig_key}'")
        key = eps_key if has_eps else sig_key
        modes.append("eps" if has_eps else "sig")
        targets.append(_parse_scalar(key, sec.pop(key)))
    if sec:
        raise ConfigError(f"step {index}: unknown key '{next(iter(sec))}'")
    try:
        return LoadStep(increments=increments, modes=tuple(modes),
                        targets=np.array(targets), theta=theta, label=label)
    except ConfigError as exc:
        raise ConfigError(f"step {index}: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    """Parse and schema-validate a configuration document."""
    globals_, step_sections = _split_sections(text)
    if not step_sections:
        raise ConfigError("configuration has no [step] sections")

    param_overrides, solver_overrides, plain = {}, {}, {}
    for key, value in globals_.items():
        if key.startswith("params."):
            param_overrides[key[len("params."):]] = value
        elif key.startswith("solver."):
            solver_overrides[key[len("solver."):]] = value
        else:
            plain[key] = value

    known = {"output", "initial_phase", "seed_fraction", "explicit_lambda",
             "initial_temperature_C", "lambda_projection"}
    for key in plain:
        if key not in known:
            raise ConfigError(f"unknown key '{key}'")

    if "initial_temperature_C" not in plain:
        raise ConfigError("missing key 'initial_temperature_C'")
    theta0 = _parse_scalar("initial_temperature_C", plain["initial_temperature_C"])

    phase = plain.get("initial_phase", "austenitic")
    if phase not in PHASE_PRESETS:
        raise ConfigError(f"key 'initial_phase': expected one of {PHASE_PRESETS}, got {phase!r}")

    explicit = None
    if phase == "explicit":
        if "explicit_lambda" not in plain:
            raise ConfigError("missing key 'explicit_lambda' (required for initial_phase = explicit)")
        parts = plain["explicit_lambda"].split(",")
        if len(parts) != 4:
            raise ConfigError("key 'explicit_lambda': expected four comma-separated fractions")
        explicit = np.array([_parse_scalar("explicit_lambda", p) for p in parts])
        if np.any(explicit <= 0.0) or np.any(explicit >= 1.0):
            raise ConfigError("key 'explicit_lambda': fractions must lie strictly inside (0, 1)")
    elif "explicit_lambda" in plain:
        raise ConfigError("key 'explicit_lambda' only allowed with initial_phase = explicit")

    projection = plain.get("lambda_projection", PROJECTION_VERBATIM)
    if projection not in PROJECTIONS:
        raise ConfigError(f"key 'lambda_projection': expected one of {PROJECTIONS}, got {projection!r}")

    seed = _parse_scalar("seed_fraction", plain.get("seed_fraction", "0.01"))
    if not 0.0 < seed < 1.0 / 3.0:
        raise ConfigError(f"key 'seed_fraction': must lie in (0, 1/3), got {seed}")

    params = _build_params(param_overrides)
    settings = _build_settings(solver_overrides, params)

    steps = []
    theta_prev = theta0
    for i, section in enumerate(step_sections, start=1):
        step = _build_step(section, i, theta_prev)
        theta_prev = step.theta
        steps.append(step)

    return RunConfig(params=params, settings=settings, initial_phase=phase,
                     seed_fraction=seed, explicit_lambda=explicit, theta0=theta0,
                     projection=projection, steps=steps,
                     output=plain.get("output"))


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
