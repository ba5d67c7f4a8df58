import pytest

from atomlink.config import from_dict

SMALL = {
    "correlation": {"events_per_point": 400, "write_records": True},
    "precession": {"n_traj": 300, "n_times": 41},
    "purity_decay": {"n_traj": 300, "n_shots": 500, "n_bootstrap": 20},
    "compensation": {"n_links": 40},
    "rate": {"attempt_rate": 1000.0, "duty_cycle": 0.25},
}


@pytest.fixture
def small_config():
    def make(scenario, **overrides):
        data = {k: dict(v) for k, v in SMALL.items()}
        for section, values in overrides.items():
            data.setdefault(section, {}).update(values)
        data["run"] = {"scenario": scenario, **data.get("run", {})}
        return from_dict(data)
    return make
