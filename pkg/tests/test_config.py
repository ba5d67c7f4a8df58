import dataclasses

import pytest

from atomlink import config as C
from atomlink import dynamics, fiber, measurement


def test_defaults_validate():
    cfg = C.ScenarioConfig()
    assert cfg.validate() is cfg
    assert cfg.correlation.beta_deg == [0.0, 22.5, 45.0, 67.5, 90.0, 112.5, 135.0, 157.5]


def test_toml_round_trip(tmp_path):
    cfg = C.ScenarioConfig()
    cfg.run.seed = 77
    cfg.correlation.bases = ["x"]
    path = tmp_path / "c.toml"
    path.write_text(C.to_toml(cfg))
    back = C.load_config(path)
    assert back.echo() == cfg.echo()


def test_unknown_section_and_field():
    with pytest.raises(C.ConfigError) as e:
        C.from_dict({"bogus": {}})
    assert e.value.field == "bogus"
    with pytest.raises(C.ConfigError) as e:
        C.from_dict({"noise": {"sigma": 1}})
    assert e.value.field == "noise.sigma"


@pytest.mark.parametrize("data,field", [
    ({"run": {"scenario": "nope"}}, "run.scenario"),
    ({"run": {"workers": 0}}, "run.workers"),
    ({"run": {"seed": -1}}, "run.seed"),
    ({"precession": {"n_traj": 0}}, "precession.n_traj"),
    ({"correlation": {"events_per_point": 0}}, "correlation.events_per_point"),
    ({"error_budget": {"prep_error": 1.5}}, "error_budget.prep_error"),
    ({"noise": {"shot_to_shot_sigma": [1e-3, 1e-3]}}, "noise.shot_to_shot_sigma"),
    ({"noise": {"lightshift_sigma_z": "big"}}, "noise.lightshift_sigma_z"),
    ({"purity_decay": {"times_us": [10.0, 20.0, 30.0, 40.0, 50.0]}}, "purity_decay.times_us"),
    ({"correlation": {"channel": "wireless"}}, "correlation.channel"),
    ({"rate": {"duty_cycle": 0.0}}, "rate.duty_cycle"),
    ({"run": {"scenario": "rate_estimate"}}, "rate.attempt_rate"),
    ({"precession": {"n_traj": 2.5}}, "precession.n_traj"),
])
def test_validation_names_field(data, field):
    with pytest.raises(C.ConfigError) as e:
        C.from_dict(data)
    assert e.value.field == field
    assert field in str(e.value)


def test_bad_toml(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[run\nseed=")
    with pytest.raises(C.ConfigError):
        C.load_config(path)


def test_int_coerced_to_float():
    cfg = C.from_dict({"fiber": {"length_m": 5}})
    assert cfg.fiber.length_m == 5.0 and isinstance(cfg.fiber.length_m, float)


def _fields(cls, skip=()):
    return {f.name for f in dataclasses.fields(cls)} - set(skip)


def test_echo_covers_every_physics_parameter():
    echo = C.ScenarioConfig().echo()
    assert _fields(dynamics.NoiseModel) <= set(echo["noise"])
    assert "gf" in echo["noise"]
    assert _fields(measurement.ErrorBudget) <= set(echo["error_budget"])
    assert _fields(fiber.FiberLinkState, skip=("transform", "compositions")) <= set(echo["fiber"])
    for name in ("polarimeter_sigma", "max_step", "threshold", "max_cycles", "cycle_time"):
        assert name in echo["fiber"]
    for name in ("guiding_field", "residual_field", "readout_delay", "beta_deg"):
        assert name in echo["correlation"]
    for name in ("bare_detection", "link_transmittance_factor", "attempt_rate", "duty_cycle"):
        assert name in echo["rate"]


def test_default_noise_matches_replication_constants():
    cfg = C.ScenarioConfig()
    assert tuple(cfg.noise.shot_to_shot_sigma) == dynamics.REPLICATION_SHOT_TO_SHOT_SIGMA
    assert cfg.noise.lightshift_sigma_z == dynamics.REPLICATION_LIGHTSHIFT_SIGMA_Z
    assert cfg.fiber.drift_rate == fiber.REPLICATION_DRIFT_RATE
