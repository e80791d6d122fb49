"""Implied constants of the two-grid error bounds across level pairs.

    python3 scripts/bound_constants.py --pairs 1:2 2:4 3:4
"""

import argparse

from pnp_twogrid.cli import parse_pair, verify_pairs


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--pairs", type=parse_pair, nargs="+", default=[(1, 2), (2, 4)])
    parser.add_argument("--algs", nargs="+", default=["tg1", "tg2", "tg3"])
    args = parser.parse_args()

    for alg in args.algs:
        report = verify_pairs(alg, args.pairs)
        print(f"\n{alg}")
        for name, entries in report.items():
            consts = ", ".join(f"{chk.constant:.4f}" for _, _, chk in entries)
            print(f"  {name:<40} C = {consts}")


if __name__ == "__main__":
    main()
