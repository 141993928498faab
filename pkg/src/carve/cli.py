"""Command-line front end.

Exit codes: 0 success, 1 usage or config error, 2 mapping/analysis
diagnostics present, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from carve import __version__
from carve.config import ConfigError, load_config, validate_config
from carve.engine import debloat_tree, lint_tree
from carve.report import render

EXIT_OK, EXIT_USAGE, EXIT_DIAGNOSTICS, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 means "diagnostics" here.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _jobs(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="carve", description="Remove feature-mapped code from a C/C++ source tree.")
    p.add_argument("config", help="debloat configuration file")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--lint", action="store_true", help="check mappings and report diagnostics, write nothing")
    mode.add_argument("--dry-run", action="store_true", help="plan every edit and print the report, write nothing")
    p.add_argument("--report", metavar="PATH", type=Path, help="write the report here instead of stdout")
    p.add_argument("--format", choices=("text", "json"), default="text", help="report format (default: text)")
    p.add_argument("--markers", choices=("on", "off"), help="override the config's marker setting")
    p.add_argument("--jobs", type=_jobs, default=1, metavar="N", help="worker processes (default: 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _print_diagnostics(diags) -> None:
    for d in diags:
        print(d, file=sys.stderr)


def _status(diags) -> int:
    if not diags:
        return EXIT_OK
    if any(d.code == "IOError" for d in diags):
        return EXIT_IO
    return EXIT_DIAGNOSTICS


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")

    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        print(f"carve: config file not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"carve: cannot read config {args.config}: {e.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, UnicodeDecodeError) as e:
        print(f"carve: {args.config}: {e}", file=sys.stderr)
        return EXIT_USAGE

    problems = validate_config(cfg)
    if problems:
        for d in problems:
            print(f"carve: {args.config}: {d.code}: {d.message}", file=sys.stderr)
        return EXIT_USAGE

    if args.lint:
        diags = lint_tree(cfg)
        _print_diagnostics(diags)
        return _status(diags)

    emit = None if args.markers is None else args.markers == "on"
    try:
        report = debloat_tree(cfg, jobs=args.jobs, write=not args.dry_run, emit_markers=emit)
    except OSError as e:
        print(f"carve: cannot create output root {cfg.output_root}: {e.strerror}", file=sys.stderr)
        return EXIT_IO
    _print_diagnostics(report.diagnostics)

    text = render(report, args.format)
    if args.report is not None:
        try:
            args.report.write_text(text, encoding="utf-8")
        except OSError as e:
            print(f"carve: cannot write report {args.report}: {e.strerror}", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(text)
    return _status(report.diagnostics)


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except KeyboardInterrupt:
        return 130
