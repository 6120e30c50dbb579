"""Command line entry point: ``plot <kind> --in <paths...> --out <png>``."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, SchemaError, render

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_IO = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render isacdt experiment outputs (CSV/PGM) as a PNG figure.")
    parser.add_argument("kind", choices=KINDS,
                        help="figure kind to render")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        metavar="PATH",
                        help="input metrics.csv (localization/beam/discovery) "
                             "or one or more PGM maps (maps)")
    parser.add_argument("--out", required=True, metavar="PNG",
                        help="output image path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    spec = FigureSpec(kind=args.kind, inputs=tuple(args.inputs),
                      output=args.out)
    try:
        out = render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
