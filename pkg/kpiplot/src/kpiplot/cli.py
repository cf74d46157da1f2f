"""kpiplot command line: render one figure kind from run directories."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import KINDS, FigureSpec, render
from .reader import RunReadError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kpiplot")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("run_dirs", nargs="+", metavar="run-dir")
    parser.add_argument("-o", "--output", required=True,
                        help="output image path (extension picks the format)")
    args = parser.parse_args(argv)
    spec = FigureSpec(kind=args.kind,
                      sources=tuple(Path(p) for p in args.run_dirs),
                      output=Path(args.output))
    try:
        path = render(spec)
    except RunReadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
