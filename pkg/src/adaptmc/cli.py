"""Command line entry point.

    adaptmc price CONFIG
    adaptmc table CONFIG_DIR
    adaptmc replicate CONFIG --runs R
    adaptmc trace CONFIG --every K

Shared flags: ``--seed``, ``--out``, ``--avg-normalize``. On failure a single
line ``error: <Kind>: <message>`` goes to stderr and the exit status is 2 for
bad input (usage or configuration) and 1 for a failed run.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .harness import format_report, load_scenarios, run_price, run_replicates, run_table, write_trace

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message, 2)


def _fail(kind: str, message: str, code: int):
    flat = " ".join(str(message).split())
    print(f"error: {kind}: {flat}", file=sys.stderr)
    raise SystemExit(code)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--out", type=Path, help="write the result to this file")
    common.add_argument(
        "--avg-normalize", choices=("verbatim", "count"), help="override algorithm.avg-normalize"
    )
    p = _Parser(prog="adaptmc", description="Adaptive importance sampling Monte Carlo experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("price", parents=[common], help="run one configuration and print its report")
    s.add_argument("config", type=Path)
    s = sub.add_parser("table", parents=[common], help="compare variants over every *.ini in a directory")
    s.add_argument("config_dir", type=Path)
    s = sub.add_parser("replicate", parents=[common], help="independent replicates with CI coverage")
    s.add_argument("config", type=Path)
    s.add_argument("--runs", type=int, required=True)
    s = sub.add_parser("trace", parents=[common], help="per-iteration CSV trace of one run")
    s.add_argument("config", type=Path)
    s.add_argument("--every", type=int, required=True)
    return p


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n", encoding="utf-8")


def _load(path: Path, args):
    cfg = load_config(path)
    return cfg.with_overrides(seed=args.seed, avg_normalize=args.avg_normalize)


def _run(args) -> None:
    if args.command == "price":
        cfg = _load(args.config, args)
        art = run_price(cfg, trace_path=cfg.output if cfg.trace_every else None)
        _emit(format_report(art.report, art.seconds), args.out)
    elif args.command == "trace":
        if args.every < 1:
            _fail("UsageError", "--every must be >= 1", 2)
        cfg = _load(args.config, args)
        art = run_price(cfg, trace_every=args.every)
        if args.out is None:
            write_trace(art.trace, sys.stdout)
        else:
            write_trace(art.trace, args.out)
    elif args.command == "replicate":
        if args.runs < 1:
            _fail("UsageError", "--runs must be >= 1", 2)
        cfg = _load(args.config, args)
        _emit(run_replicates(cfg, args.runs).as_text(), args.out)
    elif args.command == "table":
        cfgs = [c.with_overrides(seed=args.seed, avg_normalize=args.avg_normalize) for c in load_scenarios(args.config_dir)]
        table = run_table(cfgs)
        print(table.to_markdown())
        if args.out is not None:
            args.out.write_text(table.to_csv(), encoding="utf-8")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _run(args)
    except ConfigError as exc:
        _fail("ConfigError", str(exc), 2)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        _fail(type(exc).__name__, str(exc), 2)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one error line
        _fail(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
