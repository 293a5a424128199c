"""Command-line entry point.

    cqm <experiment-id> [--config FILE] [--engine E] [--jobs N]
                        [--out PATH] [--set key=value ...]
    cqm config-reference [experiment-id]
    cqm list

Exit codes: 0 success, 2 invalid configuration, 3 completed with failed cells.
CQM_OUT_DIR (default '.') is the output root when --out is not given.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import ConfigError
from .experiments import Dataset, build_config, config_reference, experiment_ids, run

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_PARTIAL_FAILURE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqm",
        description="Regenerate the critical-metrology experiment datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    sub.add_parser("list", help="list experiment ids")

    ref = sub.add_parser("config-reference", help="print every config key with defaults")
    ref.add_argument("experiment", nargs="?", choices=experiment_ids())

    for name in experiment_ids():
        exp = sub.add_parser(name, help=f"run the {name} experiment")
        exp.add_argument("--config", help="flat key=value config file")
        exp.add_argument("--engine", choices=("closed", "oracle", "both"))
        exp.add_argument("--jobs", type=int, default=None,
                         help="worker processes (default: cpu count)")
        exp.add_argument("--out", help="output CSV path")
        exp.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="KEY=VALUE", help="override one config key (repeatable)")
        exp.add_argument("--no-resume", action="store_true",
                         help="recompute everything even if the output exists")
    return parser


def _default_out(experiment: str) -> str:
    root = os.environ.get("CQM_OUT_DIR", ".")
    return os.path.join(root, f"{experiment}.csv")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "list":
        print("\n".join(experiment_ids()))
        return EXIT_OK
    if args.command == "config-reference":
        try:
            print(config_reference(args.experiment))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BAD_CONFIG
        return EXIT_OK

    try:
        cfg = build_config(
            args.command,
            config_file=args.config,
            overrides=args.overrides,
            engine=args.engine,
        )
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    out_path = args.out or _default_out(cfg.experiment)
    resume = None
    if not args.no_resume and os.path.exists(out_path):
        try:
            previous = Dataset.read_csv(out_path)
            if previous.metadata.get("config_hash") == cfg.hash():
                resume = previous
        except (ConfigError, ValueError):
            resume = None  # unreadable previous output: recompute everything

    dataset = run(cfg, jobs=args.jobs, resume=resume)
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    dataset.write_csv(out_path)

    failed = len(dataset.failed_cells)
    computed = dataset.metadata["cells_computed"]
    total = dataset.metadata["cells_total"]
    print(
        f"{cfg.experiment}: wrote {out_path} "
        f"({len(dataset.rows)} rows, {computed}/{total} cells computed, "
        f"{failed} failed)"
    )
    if failed:
        return EXIT_PARTIAL_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
