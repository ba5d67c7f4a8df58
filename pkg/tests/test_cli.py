import json
import subprocess
import sys


from atomlink import cli
from atomlink.config import SCENARIOS, to_toml


def write_config(tmp_path, small_config, scenario):
    path = tmp_path / "cfg.toml"
    path.write_text(to_toml(small_config(scenario)))
    return path


def test_subcommand_per_scenario():
    parser = cli.build_parser()
    for name in SCENARIOS:
        args = parser.parse_args([name, "--seed", "3", "--workers", "2", "--out", "o"])
        assert (args.command, args.seed, args.workers, args.out) == (name, 3, 2, "o")


def test_run_writes_outputs(tmp_path, small_config, capsys):
    cfg = write_config(tmp_path, small_config, "precession")
    code = cli.main(["precession", "--config", str(cfg), "--out", str(tmp_path / "o"),
                     "--seed", "9"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["summary"]["seed"] == 9
    manifest = json.loads((tmp_path / "o" / "precession" / "manifest.json").read_text())
    assert manifest["seed"] == 9 and manifest["config"]["run"]["scenario"] == "precession"


def test_config_error_is_json(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[precession]\nn_traj = 0\n")
    code = cli.main(["precession", "--config", str(bad), "--out", str(tmp_path)])
    assert code != 0
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["field"] == "precession.n_traj"


def test_missing_rate_inputs(tmp_path, capsys):
    code = cli.main(["rate_estimate", "--out", str(tmp_path)])
    assert code != 0
    assert json.loads(capsys.readouterr().err)["field"] == "rate.attempt_rate"


def test_missing_config_file(tmp_path, capsys):
    code = cli.main(["precession", "--config", str(tmp_path / "nope.toml")])
    assert code != 0
    assert json.loads(capsys.readouterr().err)["error"] == "io"


def test_default_config_round_trips(capsys, tmp_path):
    assert cli.main(["default-config", "--scenario", "purity_decay"]) == 0
    text = capsys.readouterr().out
    path = tmp_path / "d.toml"
    path.write_text(text)
    from atomlink.config import load_config
    assert load_config(path).run.scenario == "purity_decay"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "atomlink.cli", "rate_estimate", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode != 0
    assert json.loads(proc.stderr)["error"] == "config"
