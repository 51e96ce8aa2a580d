"""Command-line front end.

Subcommands:
  calibrate   populate the calibration cache for a sweep grid
  sweep       run a sweep from a JSON config, emit the CSV
  selftest    run the fast invariant suites
  show-calib  print cached calibrations

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .calibration import CalibrationCache, Calibrator
from .randomness import RandomStream
from .selftest import run_selftest
from .sweep import SweepConfig, SweepConfigError, run_sweep

__all__ = ["main", "cli_main"]

DEFAULT_CACHE = "calib_cache.json"


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the CLI contract reserves 2 for
    # runtime failures and uses 1 for anything configuration-shaped
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ldpmean", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    cal = sub.add_parser("calibrate", help="populate the calibration cache for a config grid")
    cal.add_argument("--config", required=True, help="sweep config JSON path")
    cal.add_argument("--calib-cache", default=DEFAULT_CACHE, help="cache file path")
    cal.add_argument("--seed", type=int, default=None, help="override the config root seed")

    sw = sub.add_parser("sweep", help="run a sweep from a JSON config")
    sw.add_argument("--config", required=True, help="sweep config JSON path")
    sw.add_argument("--calib-cache", default=DEFAULT_CACHE, help="cache file path")
    sw.add_argument("--seed", type=int, default=None, help="override the config root seed")
    sw.add_argument("--out", default=None, help="override the config output CSV path")
    sw.add_argument("--threads", type=int, default=1, help="worker threads (0 = auto)")

    st = sub.add_parser("selftest", help="run the fast invariant suites")
    st.add_argument("--seed", type=int, default=0, help="base seed for the suites")

    sh = sub.add_parser("show-calib", help="print cached calibrations")
    sh.add_argument("--calib-cache", default=DEFAULT_CACHE, help="cache file path")

    return parser


def _load_config(args) -> SweepConfig:
    try:
        config = SweepConfig.from_file(args.config)
    except FileNotFoundError:
        raise SweepConfigError([f"config file not found: {args.config}"]) from None
    except ValueError as exc:
        if isinstance(exc, SweepConfigError):
            raise
        raise SweepConfigError([f"config is not valid JSON: {exc}"]) from None
    if args.seed is not None:
        config.root_seed = args.seed
    out = getattr(args, "out", None)
    if out is not None:
        config.out_path = out
    config.validate()
    return config


def _cmd_calibrate(args) -> int:
    config = _load_config(args)
    calibrator = Calibrator(
        RandomStream(config.root_seed).derive("calib"),
        trials=config.calib_trials,
        cache=CalibrationCache(args.calib_cache),
    )
    count = 0
    for cell in config.cells():
        if cell.mechanism == "rrsc":
            M = 1 << cell.bits
            if M <= config.d:
                calibrator.simplex(M, config.d, cell.eps)
            else:
                calibrator.sphere(M, config.d, cell.eps)
            count += 1
        elif cell.mechanism == "mmrc":
            calibrator.mmrc(1 << cell.bits, config.d, cell.eps)
            count += 1
    print(
        f"calibrated {count} cells into {args.calib_cache} "
        f"(cache misses: {calibrator.cache_misses}, monte carlo runs: {calibrator.mc_runs})"
    )
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    records, calibrator = run_sweep(config, cache_path=args.calib_cache, threads=args.threads)
    print(
        f"wrote {len(records)} rows to {config.out_path} "
        f"(calibration cache misses: {calibrator.cache_misses}, "
        f"monte carlo runs: {calibrator.mc_runs})"
    )
    return 0


def _cmd_selftest(args) -> int:
    return 0 if run_selftest(args.seed) else 2


def _cmd_show_calib(args) -> int:
    cache = CalibrationCache(args.calib_cache)
    records = cache.records()
    if not records:
        print(f"no calibrations cached at {args.calib_cache}")
        return 0
    header = f"{'variant':8} {'M':>6} {'d':>6} {'eps':>10} {'k':>4} {'trials':>9} {'r_k':>14} {'ck_value':>13} {'ck_stderr':>12} sel"
    print(header)
    for rec in records:
        print(
            f"{rec['variant']:8} {rec['M']:>6} {rec['d']:>6} {rec['eps']:>10.6g} "
            f"{rec['k']:>4} {rec['trials']:>9} {rec['r_k']:>14.9g} "
            f"{rec['ck_value']:>13.6g} {rec['ck_stderr']:>12.3g} "
            f"{'*' if rec.get('selected') else ' '}"
        )
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "calibrate":
            return _cmd_calibrate(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "selftest":
            return _cmd_selftest(args)
        if args.command == "show-calib":
            return _cmd_show_calib(args)
        parser.print_usage(sys.stderr)
        return 1
    except SweepConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def cli_main(argv=None) -> int:
    """Alias kept for programmatic use."""
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
