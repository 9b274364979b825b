"""modscat-figures --trace <dir> --kind <k> --out <file> [--overlay <dir> ...]"""

from __future__ import annotations

import argparse
import sys

from .plots import FIGURE_KINDS, FigureError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="modscat-figures")
    parser.add_argument("--trace", required=True)
    parser.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    parser.add_argument("--out", required=True)
    parser.add_argument("--overlay", action="append", default=[],
                        help="additional trace directories (decay figure)")
    args = parser.parse_args(argv)
    try:
        render(args.trace, args.kind, args.out, overlays=args.overlay)
    except FigureError as exc:
        print(f"figure error: {exc}", file=sys.stderr)
        return 1
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
