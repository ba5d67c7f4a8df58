"""Scenario configuration: TOML in, validated dataclasses out."""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import dynamics, fiber, measurement

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENARIOS = ("correlation_scan", "precession", "purity_decay", "compensation_convergence",
             "rate_estimate")
ATOM_STATES = ("x-up", "x-down", "y-up", "y-down", "z-up", "z-down")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunSection:
    scenario: str = "correlation_scan"
    seed: int = 1
    workers: int = 1
    output_dir: str = "output"


@dataclass
class NoiseSection:
    static_residual_field: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    shot_to_shot_sigma: list[float] = field(
        default_factory=lambda: list(dynamics.REPLICATION_SHOT_TO_SHOT_SIGMA))
    lightshift_sigma_z: float = dynamics.REPLICATION_LIGHTSHIFT_SIGMA_Z
    trap_circular_fraction: float = dynamics.REFERENCE_CIRCULAR_FRACTION
    atom_temperature_uK: float = dynamics.REFERENCE_TEMPERATURE_UK
    gf: float = dynamics.GF_RB87_F1


@dataclass
class ErrorBudgetSection:
    atomic_readout_flip: float = 0.035
    dark_count_fraction: float = 0.03
    prep_error: float = 0.01
    pol_drift_error: float = 0.01


@dataclass
class FiberSection:
    length_m: float = 300.0
    group_index: float = 1.47
    drift_rate: float = fiber.REPLICATION_DRIFT_RATE
    loss_transmittance: float = 0.5
    polarimeter_sigma: float = fiber.REPLICATION_POLARIMETER_SIGMA
    max_step: float = fiber.REPLICATION_MAX_STEP
    threshold: float = fiber.DEFAULT_THRESHOLD
    max_cycles: int = 30
    cycle_time: float = fiber.DEFAULT_CYCLE_TIME
    stabilization_interval: float = fiber.REPLICATION_STABILIZATION_INTERVAL


@dataclass
class CorrelationSection:
    events_per_point: int = 20000
    beta_deg: list[float] = field(default_factory=lambda: [22.5 * k for k in range(8)])
    bases: list[str] = field(default_factory=lambda: ["x", "y"])
    # calibrated: detection-to-readout time and the uncompensated x field
    readout_delay: float = measurement.REPLICATION_READOUT_DELAY
    residual_field: list[float] = field(
        default_factory=lambda: list(measurement.REPLICATION_RESIDUAL_FIELD))
    guiding_field: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    channel: str = "compensated"
    write_records: bool = True


@dataclass
class PrecessionSection:
    n_traj: int = 10000
    guiding_field: list[float] = field(default_factory=lambda: [0.0, 0.0, 5.5e-3])
    initial: str = "x-down"
    t_max: float = 400e-6
    n_times: int = 201


@dataclass
class PurityDecaySection:
    n_traj: int = 10000
    guiding_field: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    transversal_initial: str = "x-down"
    longitudinal_initial: str = "z-up"
    times_us: list[float] = field(default_factory=lambda: [300.0 * k / 7 for k in range(8)])
    n_shots: int = 5000
    n_bootstrap: int = 200


@dataclass
class CompensationSection:
    n_links: int = 500
    success_cycles: int = 10


@dataclass
class RateSection:
    bare_detection: float = 1.2e-3
    link_transmittance_factor: float = 0.5
    attempt_rate: float | None = None
    duty_cycle: float | None = None


@dataclass
class ScenarioConfig:
    run: RunSection = field(default_factory=RunSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    error_budget: ErrorBudgetSection = field(default_factory=ErrorBudgetSection)
    fiber: FiberSection = field(default_factory=FiberSection)
    correlation: CorrelationSection = field(default_factory=CorrelationSection)
    precession: PrecessionSection = field(default_factory=PrecessionSection)
    purity_decay: PurityDecaySection = field(default_factory=PurityDecaySection)
    compensation: CompensationSection = field(default_factory=CompensationSection)
    rate: RateSection = field(default_factory=RateSection)

    def echo(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def validate(self) -> "ScenarioConfig":
        validate(self)
        return self


# --- loading --------------------------------------------------------------

def _coerce(name: str, value: Any, default: Any, annotation: str) -> Any:
    if "list[float]" in annotation:
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and
                                                  not isinstance(v, bool) for v in value):
            raise ConfigError(name, "expected a list of numbers")
        return [float(v) for v in value]
    if "list[str]" in annotation:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(name, "expected a list of strings")
        return list(value)
    if annotation == "bool":
        if not isinstance(value, bool):
            raise ConfigError(name, "expected true or false")
        return value
    if annotation == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(name, "expected an integer")
        return value
    if "float" in annotation:
        if value is None and "None" in annotation:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(name, "expected a number")
        return float(value)
    if annotation == "str":
        if not isinstance(value, str):
            raise ConfigError(name, "expected a string")
        return value
    return value


def from_dict(data: dict[str, Any]) -> ScenarioConfig:
    cfg = ScenarioConfig()
    sections = {f.name: f for f in dataclasses.fields(cfg)}
    for sec_name, sec_data in data.items():
        if sec_name not in sections:
            raise ConfigError(sec_name, "unknown section")
        if not isinstance(sec_data, dict):
            raise ConfigError(sec_name, "expected a table")
        section = getattr(cfg, sec_name)
        known = {f.name: f for f in dataclasses.fields(section)}
        for key, value in sec_data.items():
            name = f"{sec_name}.{key}"
            if key not in known:
                raise ConfigError(name, "unknown field")
            setattr(section, key, _coerce(name, value, getattr(section, key),
                                          str(known[key].type)))
    return validate(cfg)


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"not valid TOML: {exc}") from exc
    return from_dict(data)


def to_toml(cfg: ScenarioConfig) -> str:
    import tomli_w

    data = {k: {kk: vv for kk, vv in v.items() if vv is not None}
            for k, v in cfg.echo().items()}
    return tomli_w.dumps(data)


# --- validation -----------------------------------------------------------

def _check(cond: bool, name: str, message: str):
    if not cond:
        raise ConfigError(name, message)


def _prob(value: float, name: str):
    _check(0.0 <= value <= 1.0, name, "must lie in [0, 1]")


def _vec3(value: list[float], name: str):
    _check(len(value) == 3 and all(math.isfinite(v) for v in value), name,
           "must be three finite numbers")


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    run = cfg.run
    _check(run.scenario in SCENARIOS, "run.scenario", f"must be one of {', '.join(SCENARIOS)}")
    _check(0 <= run.seed < 2**64, "run.seed", "must be a 64-bit unsigned integer")
    _check(run.workers >= 1, "run.workers", "must be >= 1")

    n = cfg.noise
    _vec3(n.static_residual_field, "noise.static_residual_field")
    _vec3(n.shot_to_shot_sigma, "noise.shot_to_shot_sigma")
    _check(min(n.shot_to_shot_sigma) >= 0, "noise.shot_to_shot_sigma", "must be >= 0")
    _check(n.lightshift_sigma_z >= 0, "noise.lightshift_sigma_z", "must be >= 0")
    _prob(n.trap_circular_fraction, "noise.trap_circular_fraction")

    for f in dataclasses.fields(cfg.error_budget):
        _prob(getattr(cfg.error_budget, f.name), f"error_budget.{f.name}")

    fb = cfg.fiber
    _check(fb.drift_rate >= 0, "fiber.drift_rate", "must be >= 0")
    _prob(fb.loss_transmittance, "fiber.loss_transmittance")
    _check(fb.polarimeter_sigma >= 0, "fiber.polarimeter_sigma", "must be >= 0")
    _check(fb.max_step > 0, "fiber.max_step", "must be > 0")
    _check(0 < fb.threshold <= 1, "fiber.threshold", "must lie in (0, 1]")
    _check(fb.max_cycles >= 1, "fiber.max_cycles", "must be >= 1")
    _check(fb.cycle_time > 0, "fiber.cycle_time", "must be > 0")
    _check(fb.length_m >= 0, "fiber.length_m", "must be >= 0")

    c = cfg.correlation
    _check(c.events_per_point >= 1, "correlation.events_per_point", "must be >= 1")
    _check(len(c.beta_deg) >= 4, "correlation.beta_deg", "needs at least 4 settings")
    _check(len(set(c.beta_deg)) == len(c.beta_deg), "correlation.beta_deg", "duplicate settings")
    _check(bool(c.bases) and set(c.bases) <= {"x", "y", "z"}, "correlation.bases",
           "must be a non-empty subset of x, y, z")
    _check(c.readout_delay >= 0, "correlation.readout_delay", "must be >= 0")
    _vec3(c.residual_field, "correlation.residual_field")
    _vec3(c.guiding_field, "correlation.guiding_field")
    _check(c.channel in ("identity", "compensated"), "correlation.channel",
           "must be 'identity' or 'compensated'")

    p = cfg.precession
    _check(p.n_traj >= 1, "precession.n_traj", "must be >= 1")
    _vec3(p.guiding_field, "precession.guiding_field")
    _check(p.initial in ATOM_STATES, "precession.initial", f"must be one of {ATOM_STATES}")
    _check(p.t_max > 0, "precession.t_max", "must be > 0")
    _check(p.n_times >= 5, "precession.n_times", "must be >= 5")

    d = cfg.purity_decay
    _check(d.n_traj >= 1, "purity_decay.n_traj", "must be >= 1")
    _vec3(d.guiding_field, "purity_decay.guiding_field")
    for name in ("transversal_initial", "longitudinal_initial"):
        _check(getattr(d, name) in ATOM_STATES, f"purity_decay.{name}",
               f"must be one of {ATOM_STATES}")
    t = d.times_us
    _check(len(t) >= 5 and t[0] == 0 and all(b > a for a, b in zip(t, t[1:])),
           "purity_decay.times_us", "needs >= 5 strictly increasing times starting at 0")
    _check(d.n_shots >= 1, "purity_decay.n_shots", "must be >= 1")
    _check(d.n_bootstrap >= 2, "purity_decay.n_bootstrap", "must be >= 2")

    _check(cfg.compensation.n_links >= 1, "compensation.n_links", "must be >= 1")
    _check(cfg.compensation.success_cycles >= 1, "compensation.success_cycles", "must be >= 1")

    r = cfg.rate
    _check(0 < r.bare_detection <= 1, "rate.bare_detection", "must lie in (0, 1]")
    _check(0 < r.link_transmittance_factor <= 1, "rate.link_transmittance_factor",
           "must lie in (0, 1]")
    if run.scenario == "rate_estimate":
        _check(r.attempt_rate is not None, "rate.attempt_rate", "required for rate_estimate")
        _check(r.duty_cycle is not None, "rate.duty_cycle", "required for rate_estimate")
    if r.attempt_rate is not None:
        _check(r.attempt_rate > 0, "rate.attempt_rate", "must be > 0")
    if r.duty_cycle is not None:
        _check(0 < r.duty_cycle <= 1, "rate.duty_cycle", "must lie in (0, 1]")
    return cfg
