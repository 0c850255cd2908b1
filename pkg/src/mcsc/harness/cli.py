"""Command-line entry point: ``mcsc run | list-presets | compare | replay``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..errors import ConfigError
from .config import PRESET_NAMES, load_preset, resolve_config
from .runner import (
    compare_strategies,
    derive_metrics,
    metrics_csv,
    metrics_table,
    records_from_text,
    run_scenario,
)

OUTPUT_DIR_ENV = "MCSC_OUTPUT_DIR"


def _output_path(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def cmd_run(args) -> int:
    config = resolve_config(args.config)
    result = run_scenario(config, args.seed)
    csv_text = result.csv_text()
    if args.out:
        _output_path(args.out).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    if args.log:
        _output_path(args.log).write_text(result.log_text())
    return 0


def cmd_list_presets(args) -> int:
    for name in PRESET_NAMES:
        desc = load_preset(name).raw.get("description", "")
        print(f"{name:<26}{desc}")
    return 0


def cmd_compare(args) -> int:
    configs = [resolve_config(ref) for ref in args.configs]
    rows = compare_strategies(configs, args.seed)
    if args.out:
        _output_path(args.out).write_text(metrics_csv(rows))
    sys.stdout.write(metrics_table(rows))
    return 0


def cmd_replay(args) -> int:
    try:
        records = records_from_text(Path(args.log).read_text())
    except ValueError as exc:
        raise ConfigError("log", f"not an event log: {exc}") from None
    if not records:
        raise ConfigError("log", "event log is empty")
    sys.stdout.write(metrics_csv([derive_metrics(records)]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcsc", description="Run MCSC radio scenarios.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write its metrics CSV")
    run.add_argument("--config", required=True, help="config file or preset name")
    run.add_argument("--seed", type=_u64, default=None, help="override the config's rng_seed")
    run.add_argument("--out", help="CSV destination (stdout if omitted)")
    run.add_argument("--log", help="also write the JSON-lines event log here")
    run.set_defaults(func=cmd_run)

    lp = sub.add_parser("list-presets", help="list shipped scenario presets")
    lp.set_defaults(func=cmd_list_presets)

    cmp_ = sub.add_parser("compare", help="run configs that differ only in strategy")
    cmp_.add_argument("--configs", nargs="+", required=True)
    cmp_.add_argument("--seed", type=_u64, default=None)
    cmp_.add_argument("--out", help="CSV destination; the aligned table goes to stdout")
    cmp_.set_defaults(func=cmd_compare)

    rp = sub.add_parser("replay", help="re-derive metrics from an event log")
    rp.add_argument("--log", required=True)
    rp.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
