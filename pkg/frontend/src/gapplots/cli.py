"""CLI: gapplot --csv <path...> --x b_over_n --series process --out fig.png"""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gapplot",
                                     description="Plot campaign CSVs as line "
                                                 "charts with error bars")
    parser.add_argument("--csv", nargs="+", required=True, help="input CSV file(s)")
    parser.add_argument("--x", default="b_over_n",
                        help="x column (b_over_n is derived from b and n)")
    parser.add_argument("--series", default="process", help="series key column")
    parser.add_argument("--title", default="")
    parser.add_argument("--out", default="figure.png", help="output PNG path")
    args = parser.parse_args(argv)
    spec = FigureSpec(csv_paths=tuple(args.csv), x=args.x, series=args.series,
                      title=args.title, output_path=args.out)
    path = render(spec)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
