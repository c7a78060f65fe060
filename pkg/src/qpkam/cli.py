"""Command line interface: straighten | reduce | evolve | measure | selfcheck."""

from __future__ import annotations

import argparse
import json
import sys

from .config import RunConfig
from .errors import ConfigError, QpkamError
from .report import (EXIT_CONFIG, EXIT_STAGE, run_evolve, run_measure,
                     run_reduce, run_selfcheck, run_straighten, write_outputs)

COMMANDS = {
    "straighten": run_straighten,
    "reduce": run_reduce,
    "evolve": run_evolve,
    "measure": run_measure,
    "selfcheck": run_selfcheck,
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="qpkam",
        description="Reduce quasi-periodically forced first-order operators "
                    "on the circle to constant coefficients and verify the "
                    "spectral, dynamical and measure-theoretic claims.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None,
                        help="JSON config path (defaults used if omitted)")
        sp.add_argument("--out", default="qpkam_out",
                        help="output directory for reports")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker pool size for omega scans")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QpkamError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    write_outputs(result, cfg, args.out)
    _summary(result)
    return result.exit_code


def _summary(result):
    for stage, rep in result.report.get("stages", {}).items():
        if isinstance(rep, dict) and "failed" in rep:
            print(f"{stage}: FAILED - {rep['failed']}")
        else:
            keys = {k: v for k, v in rep.items()
                    if isinstance(v, (int, float, bool, str))}
            print(f"{stage}: {keys}")


if __name__ == "__main__":
    sys.exit(main())
