"""Command line entry point: ``tbrw run|sweep|oracle-check|conditions``.

Exit codes: 0 all gates met, 1 a gate failed, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import PRESETS, ConfigError, resolve_config, run_experiment, sweep


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--experiment", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--replicas", type=int)
    p.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tbrw", description="Tree builder random walk experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run a named experiment"))
    sw = sub.add_parser("sweep", help="run an experiment over a parameter grid")
    _common(sw)
    sw.add_argument("--grid", required=True,
                    help='JSON object of dotted config paths to value lists, e.g. {"law.gamma": [0.6, 0.75]}')
    _common(sub.add_parser("oracle-check", help="verify every oracle identity"))
    _common(sub.add_parser("conditions", help="evaluate the recurrence and transience condition checkers"))
    sub.add_parser("list", help="list experiment presets")
    return ap


def _load(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name in sorted(PRESETS):
            print(name)
        return 0
    try:
        file_cfg = _load(args.config)
        experiment = {"oracle-check": "oracle-check", "conditions": "conditions"}.get(
            args.command, args.experiment)
        if experiment is None and "experiment" not in file_cfg:
            raise ConfigError("--experiment or a config 'experiment' field is required")
        cfg = resolve_config(experiment, file_cfg, args.seed, args.replicas,
                             str(args.out) if args.out else None)
        if not cfg.get("out"):
            cfg["out"] = str(Path("runs") / cfg["experiment"])
        if args.command == "sweep":
            try:
                grid = json.loads(args.grid)
            except json.JSONDecodeError as e:
                raise ConfigError(f"--grid is not valid JSON: {e}") from None
            if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
                raise ConfigError("--grid must map config paths to lists")
            code, table = sweep(cfg, grid)
            for pt in table["points"]:
                print(f"point {pt['point']:3d} {json.dumps(pt['assignment'], sort_keys=True)} "
                      f"{'PASS' if pt['passed'] else 'FAIL'}")
            return code
        code, summary = run_experiment(cfg)
    except ConfigError as e:
        print(f"tbrw: configuration error: {e}", file=sys.stderr)
        return 2
    for g, ok in summary.get("gates", {}).items():
        print(f"{g}: {'PASS' if ok else 'FAIL'}")
    for f in summary.get("failures", []):
        print(f"{f['replica']}: {f['error']}", file=sys.stderr)
    print(f"{cfg['experiment']}: {'PASS' if summary['passed'] else 'FAIL'} ({cfg['out']})")
    return code


if __name__ == "__main__":
    sys.exit(main())
