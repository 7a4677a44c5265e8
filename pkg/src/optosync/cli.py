"""Command-line entry point: ``optosync run <scenario> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .errors import ConfigError, OptosyncError
from .model import parse_value, read_config
from .scenarios import SCENARIOS, SOLVERS, run_scenario, scenario_from_mapping

log = logging.getLogger("optosync")


def _parse_set(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="optosync",
        description="Squeezing, synchronization and entanglement of two mirrors in a modulated optomechanical cavity.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write CSV/SVG/report.json")
    run.add_argument("scenario", choices=SCENARIOS)
    run.add_argument("--config", help="flat key = value (or JSON object) file")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                     help="override one config key; repeatable")
    run.add_argument("--out", help="output directory (default: optosync-out/<scenario>)")
    run.add_argument("--solver", choices=SOLVERS, help="which solver(s) to run")
    run.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        mapping = read_config(args.config) if args.config else {}
        mapping.update(_parse_set(args.set))
        out = args.out or mapping.get("output_dir") or f"optosync-out/{args.scenario}"
        sc = scenario_from_mapping(args.scenario, mapping, output_dir=out, solver=args.solver)
        log.info("running %s with solver=%s into %s", sc.name, sc.solver, sc.output_dir)
        report = run_scenario(sc)
    except ConfigError as exc:
        print(f"optosync: config error: {exc}", file=sys.stderr)
        return 2
    except OptosyncError as exc:
        print(f"optosync: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps(report["metrics"], indent=2, sort_keys=True))
    print(f"outputs written to {sc.output_dir}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
