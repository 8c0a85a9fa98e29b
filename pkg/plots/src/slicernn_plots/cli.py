"""Command line for the renderer.

    slicernn-render {histogram|tuning|heatmap|metrics} \
        --in PATH [--in2 PATH] --out PATH [--title S]

Exit codes: 0 ok, 1 malformed/empty input, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import KINDS, FigureJob, FormatError, RenderArgumentError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slicernn-render",
        description="Render slicernn CSV exports as SVG figures.",
    )
    parser.add_argument("kind", choices=KINDS, help="figure kind")
    parser.add_argument("--in", dest="input_path", type=Path, required=True,
                        help="input CSV (per the slicernn export contracts)")
    parser.add_argument("--in2", dest="second_input", type=Path, default=None,
                        help="second heatmap CSV for a side-by-side panel")
    parser.add_argument("--out", dest="output_path", type=Path, required=True,
                        help="output SVG path")
    parser.add_argument("--title", default=None, help="figure title")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = FigureJob(kind=args.kind, input_path=args.input_path,
                    second_input=args.second_input,
                    output_path=args.output_path, title=args.title)
    try:
        out = render(job)
    except (FormatError, RenderArgumentError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
