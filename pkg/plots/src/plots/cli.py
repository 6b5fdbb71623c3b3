"""Command line entry point: plots convergence <csv> <png>,
plots signals <csv...> <png>."""

import argparse
import sys

from . import plot_convergence, plot_signals


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plots", description="Plot hsbem CSV outputs.")
    sub = parser.add_subparsers(dest="command", required=True)
    pc = sub.add_parser("convergence",
                        help="log-log convergence plot with fitted slope")
    pc.add_argument("csv", help="table with columns level,h,dt,error")
    pc.add_argument("png", help="output image path")
    ps = sub.add_parser("signals",
                        help="overlay signals on a shared time grid")
    ps.add_argument("csv", nargs="+", help="signal files with columns t,value")
    ps.add_argument("png", help="output image path")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "convergence":
            slope = plot_convergence(args.csv, args.png)
            print(f"fitted slope {slope:.2f} -> {args.png}")
        else:
            plot_signals(args.csv, args.png)
            print(f"wrote {args.png}")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
