"""Smooth manufactured PNP solution on the unit cube.

The exact fields are products of ``sin(k pi x_d)`` with ``k = 1, 2, 3`` for
the potential and the two concentrations. Loads are derived against the
weak forms the solvers assemble:

    NP:       (grad p, grad v) + (q p grad(phi), grad v) = (f_i, v)
              => f_i = -lap(p) - q (grad p . grad(phi) + p lap(phi))
    Poisson:  (grad phi, grad w) + (s * sum q p, w) = (f_3, w)
              => f_3 = -lap(phi) + s * sum q p

where ``s`` is ``PnpCoefficients.poisson_coupling_sign``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fem import FeFunction, PnpCoefficients, error_h1, error_l2
from .mesh import build_cube_mesh


@dataclass(frozen=True)
class SineProduct:
    """``u(x, y, z) = sin(k pi x) sin(k pi y) sin(k pi z)``."""

    k: int

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.prod(np.sin(self.k * np.pi * np.atleast_2d(x)), axis=1)

    def grad(self, x: np.ndarray) -> np.ndarray:
        a = self.k * np.pi * np.atleast_2d(x)
        s, c = np.sin(a), np.cos(a)
        kp = self.k * np.pi
        return kp * np.stack([c[:, 0] * s[:, 1] * s[:, 2],
                              s[:, 0] * c[:, 1] * s[:, 2],
                              s[:, 0] * s[:, 1] * c[:, 2]], axis=1)

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        return -3.0 * (self.k * np.pi) ** 2 * self(x)


@dataclass(frozen=True)
class ManufacturedCase:
    phi: SineProduct
    p: tuple[SineProduct, ...]
    coeffs: PnpCoefficients

    def species_load(self, i: int) -> Callable[[np.ndarray], np.ndarray]:
        p, q = self.p[i], self.coeffs.q[i]
        phi = self.phi

        def f(x):
            return (-p.laplacian(x)
                    - q * (np.sum(p.grad(x) * phi.grad(x), axis=1) + p(x) * phi.laplacian(x)))
        return f

    def poisson_load(self) -> Callable[[np.ndarray], np.ndarray]:
        sign = self.coeffs.poisson_coupling_sign
        q = self.coeffs.q

        def f(x):
            return -self.phi.laplacian(x) + sign * sum(qi * pi(x) for qi, pi in zip(q, self.p))
        return f

    def rhs(self):
        from .solvers import RhsBundle

        return RhsBundle(species_loads=[self.species_load(i) for i in range(len(self.p))],
                         poisson_load=self.poisson_load())

    @property
    def fields(self) -> dict[str, SineProduct]:
        return {"phi": self.phi, "p1": self.p[0], "p2": self.p[1]}


def exact_solution(poisson_coupling_sign: float = -1.0) -> ManufacturedCase:
    coeffs = PnpCoefficients(n_species=2, D=(1.0, 1.0), q=(1.0, -1.0), beta=1.0,
                             eps={1: 1.0, 2: 1.0}, lam={1: 0.0, 2: 1.0},
                             bulk=(0.0, 0.0), poisson_coupling_sign=poisson_coupling_sign)
    return ManufacturedCase(SineProduct(1), (SineProduct(2), SineProduct(3)), coeffs)


# --------------------------------------------------------------------------
# finite-difference validation of the closed-form loads

_D1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
_OFFSETS = np.arange(-4, 5)


def _fd_partial(f, x: np.ndarray, axis: int, step: float) -> np.ndarray:
    """Eighth-order central difference of ``f`` along ``axis``."""
    out = 0.0
    for c, o in zip(_D1, _OFFSETS):
        if c == 0.0:
            continue
        xs = x.copy()
        xs[:, axis] += o * step
        out = out + c * f(xs)
    return out / step


def fd_species_load(case: ManufacturedCase, i: int, x: np.ndarray, step: float = 1e-2) -> np.ndarray:
    """``-div(grad p + q p grad phi)`` by nested finite differences of the
    exact fields only (no analytic derivatives)."""
    p, q, phi = case.p[i], case.coeffs.q[i], case.phi

    def flux(axis):
        return lambda y: (_fd_partial(p, y, axis, step)
                          + q * p(y) * _fd_partial(phi, y, axis, step))

    return -sum(_fd_partial(flux(d), x, d, step) for d in range(3))


def fd_poisson_load(case: ManufacturedCase, x: np.ndarray, step: float = 1e-2) -> np.ndarray:
    sign = case.coeffs.poisson_coupling_sign
    lap = sum(_fd_partial(lambda y, d=d: _fd_partial(case.phi, y, d, step), x, d, step)
              for d in range(3))
    return -lap + sign * sum(qi * pi(x) for qi, pi in zip(case.coeffs.q, case.p))


def validate_loads(case: ManufacturedCase, n_points: int = 100, tol: float = 1e-6,
                   seed: int = 0) -> float:
    """Compare closed-form loads against the finite-difference oracle at
    random points; returns the max abs discrepancy, raises if above ``tol``."""
    x = np.random.default_rng(seed).uniform(0.0, 1.0, size=(n_points, 3))
    worst = 0.0
    for i in range(len(case.p)):
        worst = max(worst, np.max(np.abs(case.species_load(i)(x) - fd_species_load(case, i, x))))
    worst = max(worst, np.max(np.abs(case.poisson_load()(x) - fd_poisson_load(case, x))))
    if worst > tol:
        raise AssertionError(f"manufactured loads disagree with FD oracle by {worst:.3e}")
    return float(worst)


def interpolation_baseline(level: int, case: ManufacturedCase | None = None) -> dict:
    """L2 and H1 errors of the nodal interpolants of the exact fields."""
    case = case or exact_solution()
    mesh = build_cube_mesh(level)
    table = {}
    for name, u in case.fields.items():
        uh = FeFunction.interpolate(mesh, u)
        table[name] = {"L2": error_l2(uh, u), "H1": error_h1(uh, u, u.grad)}
    return table
