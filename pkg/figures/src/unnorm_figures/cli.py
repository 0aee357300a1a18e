"""Command-line entry point: figures --in <dir> --kind <kind> --out <file.png>."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, SchemaError, render, spec_for_dir


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render experiment summary CSVs into figures.",
    )
    parser.add_argument(
        "--in", dest="in_dir", required=True,
        help="directory holding the summary CSV files",
    )
    parser.add_argument("--kind", choices=KINDS, required=True)
    parser.add_argument(
        "--out", required=True, help="output image path (.png)",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render(spec_for_dir(args.in_dir, args.kind, args.out))
    except (SchemaError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    sys.stdout.write(f"{out}\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
