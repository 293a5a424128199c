#!/usr/bin/env python3
"""Regenerate every shipped dataset at default configuration.

Writes one CSV per experiment into --out-dir (default: ./datasets, or
$CQM_OUT_DIR when set).  Exit status is the worst CLI status across runs,
so a partial failure anywhere surfaces as a nonzero exit.
"""

import argparse
import os
import sys

from cqm.cli import main as cqm_main
from cqm.experiments import experiment_ids


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out-dir", default=os.environ.get("CQM_OUT_DIR", "datasets"),
        help="directory for the CSV outputs",
    )
    parser.add_argument("--jobs", type=int, default=None)
    parser.add_argument(
        "--experiments", nargs="*", default=experiment_ids(),
        help="subset of experiment ids (default: all)",
    )
    args = parser.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    worst = 0
    for name in args.experiments:
        argv = [name, "--out", os.path.join(args.out_dir, f"{name}.csv")]
        if args.jobs is not None:
            argv += ["--jobs", str(args.jobs)]
        status = cqm_main(argv)
        worst = max(worst, status)
    return worst


if __name__ == "__main__":
    sys.exit(main())
