"""Command line entry point: ``toolforge <subcommand> --config <path>``.

Exit status is 0 on success, 2 for configuration problems and 3 when a
stage fails (including a missing input from an earlier stage).
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .errors import ConfigError, ToolforgeError

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

STAGES = {
    "suggest": lambda cfg, jobs: pipeline.stage_suggest(cfg),
    "dataset": pipeline.stage_dataset,
    "discover": pipeline.stage_discover,
    "classify": pipeline.stage_classify,
    "transfer": pipeline.stage_transfer,
    "report": lambda cfg, jobs: pipeline.stage_report(cfg),
    "run": pipeline.run_end_to_end,
}


def build_parser():
    p = argparse.ArgumentParser(prog="toolforge",
                                description="Causal tool-feature discovery and tool selection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "suggest": "propose candidate features (features.json)",
        "dataset": "build the one-at-a-time counterfactual tools (dataset.json)",
        "discover": "scan, flag causal features and find working ranges",
        "classify": "match every target and judge it against the working ranges",
        "transfer": "transfer keypoints onto every target",
        "report": "collect all stage outputs into run_report.json",
        "run": "all stages end to end, with feature expansion on failure",
    }
    for name in STAGES:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, help="JSON pipeline config")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--jobs", type=int, default=1, help="worker threads")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = pipeline.load_config(args.config, args.out, args.seed)
        STAGES[args.command](cfg, max(1, args.jobs))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ToolforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
