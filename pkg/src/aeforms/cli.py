"""Command-line entry point: one subcommand per task plus ``report`` for the full task list."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import TASKS, ConfigError, load_config
from .runner import run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aeforms", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in TASKS + ("report",):
        p = sub.add_parser(name, help="run every configured task" if name == "report" else f"run the {name} task")
        p.add_argument("--config", required=True, type=Path, help="run configuration file")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, default=None, help="global seed, unsigned 64-bit")
        p.add_argument("--format", choices=("text", "json"), default="text", help="stdout rendering")
        p.add_argument("--dump-operators", action="store_true", help="write sparse-triplet operator dumps")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {"seed": args.seed}
        if args.command != "report":
            overrides["tasks"] = [args.command]
        if args.dump_operators:
            overrides["output.dump_operators"] = True
        cfg = cfg.with_overrides(**overrides)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    out = args.out if args.out is not None else cfg["output.dir"]
    try:
        bundle = run(cfg, out)
    except OSError as exc:
        print(f"cannot write outputs: {exc}", file=sys.stderr)
        return 3
    sys.stdout.write(bundle.to_json() if args.format == "json" else bundle.summary_text())
    return 1 if bundle.failed else 0
