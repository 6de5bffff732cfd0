"""Command line entry point: ``parastab <experiment> --config FILE [--set k=v]... [--out DIR]``."""

import argparse
import logging
import sys

from .config import load_config, parse_config
from .errors import ConfigError, ParastabError, SimulationError
from .experiments import EXPERIMENTS, run_experiment
from .reports import fmt, write_report


def build_parser():
    p = argparse.ArgumentParser(prog="parastab",
                                description="Run a feedback-stabilization experiment.")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--config", help="INI experiment file (optional for 'estimates')")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override one config entry")
    p.add_argument("--out", default=None, help="output directory (default: out/<experiment>)")
    p.add_argument("--no-svg", action="store_true", help="skip SVG plots")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args):
    estimates = args.experiment == "estimates"
    if args.config is None:
        if not estimates:
            raise ConfigError("--config is required")
        return parse_config("", args.overrides, require_time=False)
    return load_config(args.config, args.overrides, require_time=not estimates)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        report = run_experiment(args.experiment, cfg)
        out = args.out or f"out/{args.experiment}"
        svg = not args.no_svg and cfg.bool("output", "svg", True)
        write_report(report, out, cfg, svg=svg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"simulation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ParastabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for key, value in sorted(report.summary.items()):
        print(f"{key} = {fmt(value)}")
    print(f"wrote {out}")
    if report.failures:
        for msg in report.failures:
            print(f"failure: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
