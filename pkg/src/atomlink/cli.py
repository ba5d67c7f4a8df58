"""Command-line entry point: one subcommand per scenario."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .config import SCENARIOS, ConfigError, ScenarioConfig, load_config, to_toml, validate
from .harness import ScenarioError, run_scenario


def _error(kind: str, message: str, **extra) -> int:
    payload = {"error": kind, "message": message, **extra}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return 2 if kind == "config" else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atomlink",
                                     description="Atom-photon entanglement simulation runs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", help="TOML config file (defaults used if omitted)")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", help="output directory (files go to OUT/<scenario>/)")
        p.add_argument("--workers", type=int, help="override run.workers")
    p = sub.add_parser("default-config", help="print the default config as TOML")
    p.add_argument("--scenario", choices=SCENARIOS, default=SCENARIOS[0])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "default-config":
        cfg = ScenarioConfig()
        cfg.run.scenario = args.scenario
        sys.stdout.write(to_toml(cfg))
        return 0
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        cfg.run.scenario = args.command
        if args.seed is not None:
            cfg.run.seed = args.seed
        if args.workers is not None:
            cfg.run.workers = args.workers
        if args.out is not None:
            cfg.run.output_dir = args.out
        validate(cfg)
        out_dir = f"{cfg.run.output_dir}/{cfg.run.scenario}"
        manifest = run_scenario(cfg, out_dir)
    except ConfigError as exc:
        return _error("config", str(exc), field=exc.field)
    except OSError as exc:
        return _error("io", str(exc))
    except ScenarioError as exc:
        return _error("scenario", str(exc), scenario=exc.scenario)
    print(json.dumps({"output_dir": out_dir, "summary": manifest["summary"]}, indent=2,
                     sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
