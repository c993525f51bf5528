"""Command line front end.

Exit codes: 0 success, 1 configuration or setup error, 2 solver hit ``maxit``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from .config import ConfigError, load_config
from .report import CSV_COLUMNS, run_coarsen, run_solve

EXIT_OK, EXIT_ERROR, EXIT_MAXIT = 0, 1, 2

BENCH_COLUMNS = ("config",) + CSV_COLUMNS + ("status",)


def _error(msg):
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_ERROR


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_solve(args):
    try:
        cfg = load_config(args.config)
        report, _ = run_solve(cfg)
    except ConfigError as exc:
        return _error(f"invalid config: {exc}")
    except OSError as exc:
        return _error(f"cannot read config: {exc}")
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return _error(f"setup or solve failed: {exc}")
    text = report.to_text()
    sys.stdout.write(text)
    try:
        if args.report:
            _write(args.report, text)
        if args.csv:
            _write(args.csv, report.to_csv())
    except OSError as exc:
        return _error(f"cannot write output: {exc}")
    return EXIT_OK if report.converged else EXIT_MAXIT


def cmd_coarsen(args):
    try:
        cfg = load_config(args.config)
        paths = run_coarsen(cfg, args.out)
    except ConfigError as exc:
        return _error(f"invalid config: {exc}")
    except OSError as exc:
        return _error(f"i/o error: {exc}")
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return _error(f"setup failed: {exc}")
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_bench(args):
    try:
        names = sorted(f for f in os.listdir(args.dir) if os.path.isfile(os.path.join(args.dir, f)))
    except OSError as exc:
        return _error(f"cannot list {args.dir}: {exc}")
    rows = []
    for name in names:
        try:
            report, _ = run_solve(load_config(os.path.join(args.dir, name)))
            status = "converged" if report.converged else "maxit"
            rows.append([name] + report.row() + [status])
        except Exception as exc:  # noqa: BLE001  failures are recorded, the batch continues
            msg = " ".join(str(exc).split()) or type(exc).__name__
            rows.append([name] + [""] * len(CSV_COLUMNS) + [f"error: {msg}"])
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BENCH_COLUMNS)
            w.writerows(rows)
    except OSError as exc:
        return _error(f"cannot write {args.out}: {exc}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="auxamg", description="Auxiliary-topology AMG solver.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="set up and solve one configured problem")
    p.add_argument("--config", required=True)
    p.add_argument("--report", help="write the text report here")
    p.add_argument("--csv", help="write the one-row CSV summary here")
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("coarsen", help="dump per-level agglomerates as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_coarsen)
    p = sub.add_parser("bench", help="solve every config in a directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True, help="summary CSV")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
