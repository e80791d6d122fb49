"""Observed convergence orders for one solver, written as CSV.

Thin wrapper over the library study routine, useful for sweeping
several algorithms in one go:

    python3 scripts/convergence_study.py --levels 2 3 4 --out results/
"""

import argparse
from pathlib import Path

from pnp_twogrid.cli import convergence_study, format_csv, level_pairs


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--levels", type=int, nargs="+", default=[2, 3, 4])
    parser.add_argument("--algs", nargs="+", default=["fem-gummel", "tg1", "tg2", "tg3"])
    parser.add_argument("--pairing", default="fixed", choices=("square", "equal", "fixed"))
    parser.add_argument("--coarse-level", type=int, default=1)
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args()

    for alg in args.algs:
        pairs = level_pairs(alg, args.levels, args.pairing, args.coarse_level)
        text = format_csv(convergence_study(alg, pairs))
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"{alg}.csv").write_text(text)
        else:
            print(text)


if __name__ == "__main__":
    main()
