from functools import lru_cache

import pytest

from pnp_twogrid.cli import error_table
from pnp_twogrid.manufactured import exact_solution
from pnp_twogrid.mesh import build_cube_mesh
from pnp_twogrid.solvers import ALGORITHMS, gummel_solve


@lru_cache(maxsize=None)
def mesh(level):
    return build_cube_mesh(level)


@lru_cache(maxsize=None)
def gummel(level):
    case = exact_solution()
    state, metrics = gummel_solve(mesh(level), case.coeffs, case.rhs())
    return state, metrics, error_table(state, case)


@lru_cache(maxsize=None)
def two_grid(alg, coarse, fine):
    case = exact_solution()
    state, metrics = ALGORITHMS[alg](mesh(coarse), mesh(fine), case.coeffs, case.rhs())
    return state, metrics, error_table(state, case)


@pytest.fixture
def case():
    return exact_solution()
