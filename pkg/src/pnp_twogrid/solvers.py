"""Gummel iteration and the two-grid decoupling schemes for steady PNP.

All solvers share :class:`Discretization`, which holds the operators that do
not depend on the unknowns (stiffness, mass, loads) for one mesh and
assembles the potential-dependent drift on demand.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from . import fem
from .fem import FeFunction, PnpCoefficients
from .mesh import SOLVENT, Mesh
from .sparse import DEFAULT_TOL, CsrMatrix, SolverReport, solve_bicgstab, solve_cg

logger = logging.getLogger(__name__)


class InnerSolverError(RuntimeError):
    """A linear solve inside a PNP solver did not converge."""


@dataclass
class RhsBundle:
    """Right-hand side data: optional volumetric loads per species and for
    the Poisson equation, plus point charges (defaults to the coefficients'
    ``fixed_charges``)."""

    species_loads: Sequence[Callable | None] = ()
    poisson_load: Callable | None = None
    charges: Sequence | None = None


@dataclass
class GummelConfig:
    tol: float = 1e-5
    max_outer: int = 200
    damping: float = 1.0
    norm_kind: Literal["fe-l2", "coefficient-l2"] = "fe-l2"
    initial: Literal["bulk"] = "bulk"
    linear_tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.norm_kind not in ("fe-l2", "coefficient-l2"):
            raise ValueError(f"unknown norm_kind {self.norm_kind!r}")


@dataclass
class PnpState:
    phi: FeFunction
    p: list[FeFunction]

    @property
    def mesh(self) -> Mesh:
        return self.phi.mesh

    def transferred(self, mesh: Mesh) -> "PnpState":
        return PnpState(fem.transfer(self.phi, mesh), [fem.transfer(pi, mesh) for pi in self.p])


@dataclass
class RunMetrics:
    outer_iterations: int = 0
    inner_solve_counts: dict = field(default_factory=lambda: {"poisson": 0, "nernst_planck": 0,
                                                              "krylov_iterations": 0})
    wall_time_seconds: float = 0.0
    final_update_norm: float = float("nan")
    converged: bool = True
    update_history: list[float] = field(default_factory=list)
    min_concentration: list[float] = field(default_factory=list)
    residuals: dict = field(default_factory=dict)
    coarse_state: PnpState | None = None
    coarse_metrics: "RunMetrics | None" = None


class Discretization:
    """Fixed operators of the PNP system on one mesh."""

    def __init__(self, mesh: Mesh, coeffs: PnpCoefficients, rhs: RhsBundle,
                 linear_tol: float = DEFAULT_TOL):
        self.mesh = mesh
        self.coeffs = coeffs
        self.linear_tol = linear_tol
        n = coeffs.n_species

        self.solvent_tet = mesh.region_marker == SOLVENT
        solvent = self.solvent_tet.astype(float)
        self.stiff_eps = fem.assemble_stiffness(mesh, dict(coeffs.eps))
        self.mass_lam = fem.assemble_mass(mesh, dict(coeffs.lam))
        self.mass = fem.assemble_mass(mesh, 1.0)
        # Nernst-Planck forms live on the solvent region only
        self.diffusion = [fem.region_values(mesh, coeffs.D[i]) * solvent for i in range(n)]
        self.stiff_D = [fem.assemble_stiffness(mesh, d) for d in self.diffusion]

        charges = coeffs.fixed_charges if rhs.charges is None else rhs.charges
        load3 = fem.assemble_point_sources(mesh, charges)
        if rhs.poisson_load is not None:
            load3 = load3 + fem.assemble_load(mesh, rhs.poisson_load)
        self.load_poisson = load3
        loads = list(rhs.species_loads)[:n]
        loads += [None] * (n - len(loads))
        self.load_species = [
            np.zeros(mesh.n_vertices) if f is None
            else fem.assemble_load(mesh, f, region_weight=solvent)
            for f in loads
        ]

        self.boundary = np.flatnonzero(mesh.boundary_vertex)
        # concentrations are unknown only at vertices touching solvent tets
        active = np.zeros(mesh.n_vertices, dtype=bool)
        active[mesh.tets[self.solvent_tet].ravel()] = True
        self.inactive = np.flatnonzero(~active & ~mesh.boundary_vertex)
        self.species_fixed = np.concatenate([self.boundary, self.inactive])

    def _drift_scale(self, i: int) -> np.ndarray:
        c = self.coeffs
        return self.diffusion[i] * (c.beta * c.q[i])

    def species_values(self, i: int) -> np.ndarray:
        """Prescribed values at ``species_fixed``: bulk on the outer boundary,
        zero at solute-only vertices."""
        return np.concatenate([np.full(len(self.boundary), self.coeffs.bulk[i]),
                               np.zeros(len(self.inactive))])

    def initial_species(self, i: int) -> FeFunction:
        c = np.full(self.mesh.n_vertices, float(self.coeffs.bulk[i]))
        c[self.inactive] = 0.0
        return FeFunction(self.mesh, c)

    # -- systems ----------------------------------------------------------

    def poisson_system(self, p: Sequence[FeFunction]) -> tuple[CsrMatrix, np.ndarray]:
        c = self.coeffs
        charge = sum(qi * pi.coeffs for qi, pi in zip(c.q, p))
        b = self.load_poisson - c.poisson_coupling_sign * (self.mass_lam @ charge)
        return fem.apply_dirichlet(self.stiff_eps, b, self.boundary, 0.0)

    def species_system(self, i: int, phi: FeFunction) -> tuple[CsrMatrix, np.ndarray]:
        A = self.stiff_D[i] + fem.assemble_drift(self.mesh, phi, self._drift_scale(i))
        return fem.apply_dirichlet(A, self.load_species[i], self.species_fixed,
                                   self.species_values(i))

    def solve_poisson(self, p, metrics: RunMetrics | None = None) -> FeFunction:
        A, b = self.poisson_system(p)
        x, rep = solve_cg(A, b, tol=self.linear_tol)
        self._record(rep, "poisson", metrics)
        return FeFunction(self.mesh, x)

    def solve_species(self, i: int, phi: FeFunction, metrics: RunMetrics | None = None) -> FeFunction:
        A, b = self.species_system(i, phi)
        x, rep = solve_bicgstab(A, b, tol=self.linear_tol)
        self._record(rep, "nernst_planck", metrics)
        return FeFunction(self.mesh, x)

    @staticmethod
    def _record(rep: SolverReport, kind: str, metrics: RunMetrics | None):
        if not rep.converged:
            raise InnerSolverError(f"{kind} solve failed: residual {rep.final_relative_residual:.3e} "
                                   f"after {rep.iterations} iterations")
        if metrics is not None:
            metrics.inner_solve_counts[kind] += 1
            metrics.inner_solve_counts["krylov_iterations"] += rep.iterations

    def update_norm(self, new: FeFunction, old: FeFunction, kind: str = "fe-l2") -> float:
        d = new.coeffs - old.coeffs
        if kind == "coefficient-l2":
            return float(np.linalg.norm(d))
        return float(np.sqrt(max(d @ (self.mass @ d), 0.0)))


def _relative_residual(A: CsrMatrix, x: np.ndarray, b: np.ndarray) -> float:
    r = np.linalg.norm(b - A @ x)
    bn = np.linalg.norm(b)
    return float(r / bn) if bn > 0 else float(r)


def system_residuals(disc: Discretization, phi: FeFunction, p: Sequence[FeFunction],
                     p_for_poisson: Sequence[FeFunction] | None = None,
                     phi_for_species: FeFunction | None = None) -> dict:
    """Relative residuals ``||b - A x|| / ||b||`` of the discrete Poisson and
    Nernst-Planck systems evaluated at ``(phi, p)``.

    ``p_for_poisson`` and ``phi_for_species`` override the data frozen in
    each equation, matching how a decoupled sweep actually posed it.
    """
    A, b = disc.poisson_system(p if p_for_poisson is None else p_for_poisson)
    out = {"poisson": _relative_residual(A, phi.coeffs, b)}
    drive = phi if phi_for_species is None else phi_for_species
    for i, pi in enumerate(p):
        A, b = disc.species_system(i, drive)
        out[f"species_{i + 1}"] = _relative_residual(A, pi.coeffs, b)
    return out


def gummel_solve(mesh: Mesh, coeffs: PnpCoefficients, rhs: RhsBundle,
                 cfg: GummelConfig | None = None,
                 disc: Discretization | None = None) -> tuple[PnpState, RunMetrics]:
    """Gummel fixed point: Poisson with frozen concentrations, then each
    Nernst-Planck equation with the new potential, until the potential update
    drops below ``cfg.tol``."""
    cfg = cfg or GummelConfig()
    t0 = time.perf_counter()
    disc = disc or Discretization(mesh, coeffs, rhs, cfg.linear_tol)
    metrics = RunMetrics(converged=False)

    phi = FeFunction.zeros(mesh)
    p = [disc.initial_species(i) for i in range(coeffs.n_species)]
    p_prev = p
    for m in range(1, cfg.max_outer + 1):
        phi_new = disc.solve_poisson(p, metrics)
        p_hat = [disc.solve_species(i, phi_new, metrics) for i in range(coeffs.n_species)]
        if cfg.damping < 1.0:
            w = cfg.damping
            p_hat = [FeFunction(mesh, w * ph.coeffs + (1 - w) * po.coeffs)
                     for ph, po in zip(p_hat, p)]
        update = disc.update_norm(phi_new, phi, cfg.norm_kind)
        metrics.update_history.append(update)
        logger.debug("gummel level %d iter %d update %.3e", mesh.level, m, update)
        p_prev, phi, p = p, phi_new, p_hat
        metrics.outer_iterations = m
        if update < cfg.tol:
            metrics.converged = True
            break
    else:
        logger.warning("gummel did not converge in %d iterations (update %.3e)",
                       cfg.max_outer, metrics.update_history[-1])

    metrics.final_update_norm = metrics.update_history[-1]
    state = PnpState(phi, p)
    metrics.residuals = {
        "sweep": system_residuals(disc, phi, p, p_for_poisson=p_prev),
        "coupled": system_residuals(disc, phi, p),
    }
    metrics.min_concentration = [float(pi.coeffs.min()) for pi in p]
    metrics.wall_time_seconds = time.perf_counter() - t0
    return state, metrics


def _coarse_step(coarse, fine, coeffs, rhs, cfg):
    if coarse.level > fine.level:
        raise ValueError("coarse level must not exceed fine level")
    cstate, cmetrics = gummel_solve(coarse, coeffs, rhs, cfg)
    return cstate, cmetrics, cstate.transferred(fine)


def _finish(metrics: RunMetrics, t0: float, state: PnpState, disc: Discretization,
            p_for_poisson, phi_for_species) -> tuple[PnpState, RunMetrics]:
    metrics.outer_iterations = 1
    metrics.converged = metrics.coarse_metrics.converged
    metrics.residuals = {
        "sweep": system_residuals(disc, state.phi, state.p, p_for_poisson, phi_for_species),
        "coupled": system_residuals(disc, state.phi, state.p),
    }
    metrics.min_concentration = [float(pi.coeffs.min()) for pi in state.p]
    metrics.wall_time_seconds = time.perf_counter() - t0
    return state, metrics


def two_grid_I(coarse: Mesh, fine: Mesh, coeffs: PnpCoefficients, rhs: RhsBundle,
               cfg: GummelConfig | None = None) -> tuple[PnpState, RunMetrics]:
    """Coarse Gummel solve, then fine Poisson with the coarse concentrations
    followed by fine Nernst-Planck with the new fine potential."""
    cfg = cfg or GummelConfig()
    t0 = time.perf_counter()
    cstate, cmetrics, H = _coarse_step(coarse, fine, coeffs, rhs, cfg)
    metrics = RunMetrics(coarse_state=cstate, coarse_metrics=cmetrics)
    disc = Discretization(fine, coeffs, rhs, cfg.linear_tol)
    phi = disc.solve_poisson(H.p, metrics)
    p = [disc.solve_species(i, phi, metrics) for i in range(coeffs.n_species)]
    return _finish(metrics, t0, PnpState(phi, p), disc, H.p, phi)


def two_grid_II(coarse: Mesh, fine: Mesh, coeffs: PnpCoefficients, rhs: RhsBundle,
                cfg: GummelConfig | None = None,
                parallel: bool = False) -> tuple[PnpState, RunMetrics]:
    """Coarse Gummel solve, then mutually independent fine solves: Poisson
    with the coarse concentrations, Nernst-Planck with the coarse potential.

    With ``parallel=True`` the fine solves run on a thread pool; results are
    identical to the sequential path.
    """
    cfg = cfg or GummelConfig()
    t0 = time.perf_counter()
    cstate, cmetrics, H = _coarse_step(coarse, fine, coeffs, rhs, cfg)
    metrics = RunMetrics(coarse_state=cstate, coarse_metrics=cmetrics)
    disc = Discretization(fine, coeffs, rhs, cfg.linear_tol)
    n = coeffs.n_species
    if parallel:
        with ThreadPoolExecutor(max_workers=n + 1) as pool:
            fphi = pool.submit(disc.solve_poisson, H.p)
            fp = [pool.submit(disc.solve_species, i, H.phi) for i in range(n)]
            phi = fphi.result()
            p = [f.result() for f in fp]
        # counts recorded after the fact to keep metrics single-writer
        metrics.inner_solve_counts["poisson"] += 1
        metrics.inner_solve_counts["nernst_planck"] += n
    else:
        phi = disc.solve_poisson(H.p, metrics)
        p = [disc.solve_species(i, H.phi, metrics) for i in range(n)]
    return _finish(metrics, t0, PnpState(phi, p), disc, H.p, H.phi)


def two_grid_III(coarse: Mesh, fine: Mesh, coeffs: PnpCoefficients, rhs: RhsBundle,
                 cfg: GummelConfig | None = None) -> tuple[PnpState, RunMetrics]:
    """Coarse Gummel solve, then fine Nernst-Planck with the coarse potential
    followed by fine Poisson with the new fine concentrations."""
    cfg = cfg or GummelConfig()
    t0 = time.perf_counter()
    cstate, cmetrics, H = _coarse_step(coarse, fine, coeffs, rhs, cfg)
    metrics = RunMetrics(coarse_state=cstate, coarse_metrics=cmetrics)
    disc = Discretization(fine, coeffs, rhs, cfg.linear_tol)
    p = [disc.solve_species(i, H.phi, metrics) for i in range(coeffs.n_species)]
    phi = disc.solve_poisson(p, metrics)
    return _finish(metrics, t0, PnpState(phi, p), disc, p, H.phi)


ALGORITHMS = {
    "tg1": two_grid_I,
    "tg2": two_grid_II,
    "tg3": two_grid_III,
}


# --------------------------------------------------------------------------
# a priori bound checks

BOUNDS = {
    # name: (what the left side measures, what the right side measures)
    "potential_by_coarse_concentration":
        ("||grad(phi_h - phi_h*)||_0", "sum_i ||p_h^i - p_H^i||_0"),
    "concentration_by_coarse_concentration":
        ("sum_i ||grad(p_h^i - p_h^i*)||_0", "sum_i ||p_h^i - p_H^i||_0"),
    "concentration_by_coarse_potential":
        ("sum_i ||grad(p_h^i - p_h^i*)||_0", "||grad(phi_h - phi_H)||_0"),
}


@dataclass
class BoundCheck:
    lhs: float
    rhs: float

    @property
    def exact(self) -> bool:
        return self.lhs == 0.0

    @property
    def constant(self) -> float:
        """Implied constant ``lhs / rhs``; 0 when both sides vanish."""
        if self.lhs == 0.0:
            return 0.0
        return self.lhs / self.rhs if self.rhs > 0 else float("inf")


def verify_theorem_bounds(state_fem: PnpState, state_tg: PnpState,
                          coarse_state: PnpState) -> dict[str, BoundCheck]:
    """Evaluate both sides of the two-grid error bounds on the fine mesh.

    ``state_fem`` is the fine coupled solution, ``state_tg`` the two-grid
    solution and ``coarse_state`` the coarse coupled solution (transferred to
    the fine mesh here if needed). Concentration norms are taken over the
    solvent region.
    """
    mesh = state_fem.mesh
    if state_tg.mesh is not mesh:
        raise ValueError("fine states must share one mesh")
    coarse = coarse_state if coarse_state.mesh is mesh else coarse_state.transferred(mesh)
    solvent = (mesh.region_marker == SOLVENT).astype(float)

    dphi_tg = fem.diff_h1_semi(state_fem.phi, state_tg.phi)
    dphi_H = fem.diff_h1_semi(state_fem.phi, coarse.phi, solvent)
    dp_H = sum(fem.diff_l2(a, b, solvent) for a, b in zip(state_fem.p, coarse.p))
    dp_tg = sum(fem.diff_h1_semi(a, b, solvent) for a, b in zip(state_fem.p, state_tg.p))
    return {
        "potential_by_coarse_concentration": BoundCheck(dphi_tg, dp_H),
        "concentration_by_coarse_concentration": BoundCheck(dp_tg, dp_H),
        "concentration_by_coarse_potential": BoundCheck(dp_tg, dphi_H),
    }


def constants_bounded(constants: Sequence[float], max_ratio: float = 5.0) -> bool:
    """True if the nonzero implied constants stay within ``max_ratio`` of
    each other (all-zero sequences count as bounded)."""
    c = [x for x in constants if x > 0]
    if not c:
        return True
    if not all(np.isfinite(c)):
        return False
    return max(c) / min(c) < max_ratio
