"""CLI: plot --csv PATH --x {eps|bits|n|d} [--filter col=val ...] --out PATH [--logy]

Exit codes: 0 success, 1 usage error, 2 schema or no-data error.
"""

from __future__ import annotations

import argparse
import sys

from .render import NoDataError, PlotSpec, SchemaError, X_AXES, render


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def main(argv=None) -> int:
    parser = _Parser(prog="ldpmean-plot", description=__doc__)
    parser.add_argument("--csv", required=True, help="sweep CSV path")
    parser.add_argument("--x", required=True, choices=X_AXES, help="x axis column")
    parser.add_argument("--filter", action="append", default=[], metavar="COL=VAL",
                        help="keep only rows with COL == VAL (repeatable)")
    parser.add_argument("--out", required=True, help="output PNG path")
    parser.add_argument("--logy", action="store_true", help="log-scale y axis")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        filters = {}
        for pair in args.filter:
            if "=" not in pair:
                print(f"error: bad --filter {pair!r}; expected col=val", file=sys.stderr)
                return 1
            column, value = pair.split("=", 1)
            filters[column] = value
        spec = PlotSpec(csv_path=args.csv, x_axis=args.x, out_path=args.out,
                        filters=filters, logy=args.logy)
        render(spec)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SchemaError, NoDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
