"""Recompute the manufactured-solution error tables.

Prints the coupled Gummel H1 and L2 errors by level, then the two-grid
H1 rows for algorithms I and II, each next to its reference value.

    python3 scripts/reproduce_tables.py            # levels 2-4
    python3 scripts/reproduce_tables.py --max-level 5
"""

import argparse
import time

from pnp_twogrid.cli import error_table
from pnp_twogrid.manufactured import exact_solution
from pnp_twogrid.mesh import build_cube_mesh
from pnp_twogrid.solvers import gummel_solve, two_grid_I, two_grid_II

FIELDS = ("phi", "p1", "p2")

REFERENCE = {
    "H1": {2: (9.14e-01, 3.03e00, 5.39e00), 3: (4.80e-01, 1.82e00, 3.75e00),
           4: (2.43e-01, 9.57e-01, 2.10e00), 5: (1.22e-01, 4.85e-01, 1.09e00)},
    "L2": {2: (8.97e-02, 2.41e-01, 3.26e-01), 3: (2.50e-02, 8.99e-02, 1.72e-01),
           4: (6.44e-03, 2.53e-02, 5.59e-02), 5: (1.62e-03, 6.51e-03, 1.50e-02)},
    "tg1": {(1, 2): (9.15e-01, 3.03e00, 5.39e00), (2, 4): (2.44e-01, 9.57e-01, 2.10e00)},
    "tg2": {(1, 2): (9.15e-01, 3.03e00, 5.39e00), (2, 4): (2.44e-01, 9.89e-01, 2.10e00),
            (3, 4): None},
}


def row(label, errors, norm, ref, seconds):
    cells = "  ".join(f"{errors[f][norm]:.3E}" for f in FIELDS)
    refs = "  ".join(f"{r:.2E}" for r in ref) if ref else "-"
    return f"{label:<14}{cells}   ref {refs}   {seconds:6.2f}s"


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--max-level", type=int, default=4, choices=(4, 5))
    args = parser.parse_args()
    case = exact_solution()

    results = {}
    for level in range(2, args.max_level + 1):
        t0 = time.perf_counter()
        state, _ = gummel_solve(build_cube_mesh(level), case.coeffs, case.rhs())
        results[level] = (error_table(state, case), time.perf_counter() - t0)

    for norm in ("H1", "L2"):
        print(f"\ncoupled Gummel, {norm} errors (phi, p1, p2)")
        for level, (errors, secs) in results.items():
            print(row(f"h=1/{2 ** level}", errors, norm, REFERENCE[norm][level], secs))

    for name, solver in (("tg1", two_grid_I), ("tg2", two_grid_II)):
        print(f"\n{name}, H1 errors (phi, p1, p2)")
        for (c, f), ref in REFERENCE[name].items():
            t0 = time.perf_counter()
            state, _ = solver(build_cube_mesh(c), build_cube_mesh(f), case.coeffs, case.rhs())
            errors = error_table(state, case)
            print(row(f"1/{2 ** c}, 1/{2 ** f}", errors, "H1", ref, time.perf_counter() - t0))


if __name__ == "__main__":
    main()
