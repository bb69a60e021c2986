"""Command-line entry points: one subcommand per experiment plus the
offline rate fit.  Configurations are JSON files (see ExperimentConfig);
artifacts land in the --out directory."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import io as tio
from .experiments import RUNNERS, ExperimentConfig, fit_rate


def _add_common(sub):
    sub.add_argument("--config", required=False, help="JSON config file")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--jobs", type=int, default=None,
                     help="parallel ladder entries")


def _load_config(args, experiment):
    if args.config:
        with open(args.config) as f:
            doc = json.load(f)
        doc["experiment"] = experiment
    else:
        doc = {"experiment": experiment}
    if args.out:
        doc["out_dir"] = args.out
    if args.jobs:
        doc["jobs"] = args.jobs
    return ExperimentConfig(**doc)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="triodlab",
        description="curve-shortening triple junctions as Allen-Cahn interfaces",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("convergence", "uniqueness", "blowup", "residual-audit"):
        sub = subs.add_parser(name, help=f"run the {name} experiment")
        _add_common(sub)

    rate = subs.add_parser("rate-fit", help="fit the rate exponent of a ladder CSV")
    rate.add_argument("--table", required=True, help="convergence CSV")
    rate.add_argument("--out", default=None, help="output directory")

    args = parser.parse_args(argv)
    if args.command == "rate-fit":
        header, rows = tio.read_table(args.table)
        pairs = [(r[0], r[1]) for r in rows if isinstance(r[1], float)]
        fit = fit_rate(pairs)
        fit["passed"] = fit["l"] > 0
        text = json.dumps(fit, indent=2, sort_keys=True)
        if args.out:
            tio.ensure_dir(args.out)
            with open(os.path.join(args.out, "rate.json"), "w") as f:
                f.write(text + "\n")
        print(text)
        return 0

    config = _load_config(args, args.command)
    report = RUNNERS[args.command](config)
    print(json.dumps(report, indent=2, sort_keys=True, default=str))
    passed = report.get("passed")
    return 0 if passed in (True, None) else 1


if __name__ == "__main__":
    sys.exit(main())
