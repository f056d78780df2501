"""Command-line interface: one subcommand per experiment kind plus a
post-hoc `plot` command that renders figures from saved results.

Exit code 0 means every seed completed; any seed error exits 1 after the
partial results are written.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from fuselab.experiments.config import ConfigError, EXPERIMENT_KINDS, ExperimentConfig
from fuselab.experiments.emit import FORMATS, emit, load_table
from fuselab.experiments.plots import render_figures
from fuselab.experiments.runner import run


def _parse_seeds(raw: str) -> list[int]:
    try:
        return [int(s) for s in raw.split(",") if s.strip() != ""]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad seed list {raw!r}") from err


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuselab",
        description="Desk-scale experiments on knowledge forgetting under model fusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="path to the experiment config JSON")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seeds", type=_parse_seeds, default=None, help="comma-separated seed list")
        p.add_argument(
            "--format", choices=FORMATS + ("all",), default="csv", help="result file format"
        )
        p.add_argument("--plot", action="store_true", help="also render figures to <out>/figures/")
    plot = sub.add_parser("plot", help="render figures from a saved results.json")
    plot.add_argument("--results", required=True, help="path to results.json")
    plot.add_argument("--out", required=True, help="output directory for figures")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot":
        table = load_table(args.results)
        paths = render_figures(table, args.out)
        for path in paths:
            print(path)
        return 0

    try:
        config = ExperimentConfig.load(args.config)
        if config.kind != args.command:
            print(
                f"error: config kind {config.kind!r} does not match subcommand {args.command!r}",
                file=sys.stderr,
            )
            return 2
        config = config.with_overrides(out_dir=args.out, seeds=args.seeds)
    except (ConfigError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    table = run(config)
    out_dir = Path(config.out_dir) if config.out_dir else Path(".")
    if table.rows:
        formats = FORMATS if args.format == "all" else (args.format,)
        for fmt in formats:
            for path in emit(table, fmt, out_dir):
                print(path)
        if args.plot:
            for path in render_figures(table, out_dir):
                print(path)
    else:
        out_dir.mkdir(parents=True, exist_ok=True)
        err_path = out_dir / "errors.csv"
        with open(err_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seed", "stage", "message"])
            for err in table.errors:
                writer.writerow([err.seed, err.stage, err.message])
        print(err_path)
    for err in table.errors:
        print(f"seed {err.seed} failed at {err.stage}: {err.message}", file=sys.stderr)
    return 0 if table.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
