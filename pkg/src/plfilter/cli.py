"""Command-line entry point: ``plfilter {approx,localize,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConvergenceError, FeasibilityError, PLFilterError
from .experiments import FILTERS, emit, load_config, run_approx_example, run_localization

# exit codes by failure category
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_SOLVER = 4
EXIT_IO = 5
EXIT_TESTS = 6


def _filters(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [n for n in names if n not in FILTERS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"filters must be a comma list from {','.join(FILTERS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plfilter", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--scenario", choices=["approx", "localize"])
    common.add_argument("--order", type=int, help="moment order 2n")
    common.add_argument("--runs", type=int)
    common.add_argument("--steps", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--filters", type=_filters, help="comma list, e.g. kf,pf,dpbm")
    common.add_argument("--particles", type=int)
    common.add_argument("--xmin", type=float)
    common.add_argument("--xmax", type=float)
    common.add_argument("--nodes", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output directory (else $PLFILTER_OUT, then config)")
    common.add_argument("--format", choices=["csv", "json", "both"])

    approx = sub.add_parser("approx", parents=[common], help="density approximation example")
    approx.add_argument("--example", type=int, choices=[1, 2, 3], required=True)
    sub.add_parser("localize", parents=[common], help="Monte-Carlo localization study")
    selftest = sub.add_parser("selftest", help="run the test suite")
    selftest.add_argument("pytest_args", nargs="*", help="extra pytest arguments")
    return parser


def _overrides(args, scenario: str) -> dict:
    keys = ["order", "runs", "steps", "seed", "filters", "particles", "xmin", "xmax",
            "nodes", "workers", "format"]
    out = {k: getattr(args, k) for k in keys}
    out["scenario"] = args.scenario or scenario
    if scenario == "approx":
        out["example"] = args.example
    return out


def _selftest(extra: list[str]) -> int:
    try:
        import pytest
    except ImportError:
        print("selftest needs pytest installed", file=sys.stderr)
        return EXIT_TESTS
    tests = Path(__file__).resolve().parents[2] / "tests"
    target = [str(tests)] if tests.is_dir() else ["--pyargs", "plfilter"]
    return EXIT_OK if pytest.main(target + list(extra)) == 0 else EXIT_TESTS


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        return _selftest(args.pytest_args)

    try:
        config = load_config(args.config, **_overrides(args, args.command))
    except (OSError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if config.scenario == "approx":
            report = run_approx_example(config.example, config)
        else:
            report = run_localization(config)
    except (ConvergenceError, FeasibilityError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except PLFilterError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    try:
        written = emit(report, config.format, args.out)
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
