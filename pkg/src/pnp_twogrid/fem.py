"""P1 finite elements on tetrahedral meshes.

Assembly routines return :class:`~pnp_twogrid.sparse.CsrMatrix` operators
without boundary conditions; :func:`apply_dirichlet` eliminates constrained
vertices symmetrically afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .mesh import SOLUTE, SOLVENT, Mesh, locate_points
from .sparse import CsrMatrix

ScalarField = Callable[[np.ndarray], np.ndarray]
RegionScalar = float | Mapping[int, float] | np.ndarray


# --------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points (q, 4) and weights (q,) summing to one."""

    points: np.ndarray
    weights: np.ndarray
    degree: int
    name: str = ""


def _orbit_22(a: float) -> np.ndarray:
    b = 0.5 - a
    return np.array([[a, a, b, b], [a, b, a, b], [a, b, b, a],
                     [b, a, a, b], [b, a, b, a], [b, b, a, a]])


def _orbit_31(a: float) -> np.ndarray:
    b = 1.0 - 3.0 * a
    return np.array([[b, a, a, a], [a, b, a, a], [a, a, b, a], [a, a, a, b]])


def degree2_rule() -> QuadratureRule:
    a = (5.0 - np.sqrt(5.0)) / 20.0
    return QuadratureRule(_orbit_31(a), np.full(4, 0.25), 2, "4-point")


def keast4_rule() -> QuadratureRule:
    """Keast's 11-point rule, exact for polynomials of degree 4."""
    pts = np.vstack([
        np.full((1, 4), 0.25),
        _orbit_31(1.0 / 14.0),
        _orbit_22(0.1005964238332008),
    ])
    w = np.concatenate([[-74.0 / 937.5], np.full(4, 343.0 / 7500.0), np.full(6, 56.0 / 375.0)])
    return QuadratureRule(pts, w, 4, "keast-11")


def conical_rule(n: int) -> QuadratureRule:
    """Collapsed-coordinate Gauss product rule with ``n**3`` points,
    exact to degree ``2 n - 1``. Used as an independent high-order check."""
    from scipy.special import roots_jacobi

    x0, w0 = roots_jacobi(n, 2.0, 0.0)
    x1, w1 = roots_jacobi(n, 1.0, 0.0)
    x2, w2 = roots_jacobi(n, 0.0, 0.0)
    # map [-1, 1] -> [0, 1]
    s, t, u = (x0 + 1) / 2, (x1 + 1) / 2, (x2 + 1) / 2
    ws, wt, wu = w0 / 8.0, w1 / 4.0, w2 / 2.0
    S, T, U = np.meshgrid(s, t, u, indexing="ij")
    W = np.einsum("i,j,k->ijk", ws, wt, wu)
    x = S
    y = (1 - S) * T
    z = (1 - S) * (1 - T) * U
    pts = np.stack([1 - x - y - z, x, y, z], axis=-1).reshape(-1, 4)
    w = W.ravel()
    return QuadratureRule(pts, w / w.sum(), 2 * n - 1, f"conical-{n}")


DEG2 = degree2_rule()
DEG4 = keast4_rule()


# --------------------------------------------------------------------------
# coefficients and functions

@dataclass
class PnpCoefficients:
    """Physical parameters of the PNP system.

    Per-region quantities are keyed by region marker (``SOLUTE``=1,
    ``SOLVENT``=2). ``poisson_coupling_sign`` multiplies the charge term in
    ``b2(p, w) = (sign * lambda * sum q^i p^i, w)``; the default ``-1`` gives
    the standard ``-lambda * sum q^i p^i``.
    """

    n_species: int = 2
    D: Sequence[RegionScalar] = (1.0, 1.0)
    q: Sequence[float] = (1.0, -1.0)
    beta: float = 1.0
    eps: Mapping[int, float] = field(default_factory=lambda: {SOLUTE: 1.0, SOLVENT: 1.0})
    lam: Mapping[int, float] = field(default_factory=lambda: {SOLUTE: 0.0, SOLVENT: 1.0})
    fixed_charges: Sequence[tuple[float, Sequence[float]]] = ()
    bulk: Sequence[float] = (0.0, 0.0)
    poisson_coupling_sign: float = -1.0

    def __post_init__(self):
        for name in ("D", "q", "bulk"):
            if len(getattr(self, name)) != self.n_species:
                raise ValueError(f"{name} needs {self.n_species} entries")
        for d in self.D:
            vals = d.values() if isinstance(d, Mapping) else [d]
            if any(v <= 0 for v in vals):
                raise ValueError("diffusion coefficients must be positive")
        if any(v <= 0 for v in self.eps.values()):
            raise ValueError("dielectric coefficients must be positive")
        if any(v not in (0.0, 1.0) for v in self.lam.values()):
            raise ValueError("lambda must be 0 or 1 in each region")


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Nodal P1 coefficients bound to a mesh."""

    mesh: Mesh
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != self.mesh.n_vertices:
            raise ValueError("coefficient count does not match mesh vertices")

    @classmethod
    def interpolate(cls, mesh: Mesh, f: ScalarField) -> "FeFunction":
        return cls(mesh, np.asarray(f(mesh.vertices), dtype=float))

    @classmethod
    def zeros(cls, mesh: Mesh) -> "FeFunction":
        return cls(mesh, np.zeros(mesh.n_vertices))

    def __call__(self, points) -> np.ndarray:
        tet, lam = locate_points(self.mesh, points)
        return np.einsum("mi,mi->m", lam, self.coeffs[self.mesh.tets[tet]])

    def gradients(self) -> np.ndarray:
        """Per-tet constant gradient (nt, 3)."""
        grads, _ = self.mesh.geometry()
        return np.einsum("ti,tid->td", self.coeffs[self.mesh.tets], grads)


def region_values(mesh: Mesh, value: RegionScalar) -> np.ndarray:
    """Expand a scalar, ``{region: value}`` mapping or per-tet array to one
    value per tet."""
    if isinstance(value, np.ndarray) and value.ndim == 1:
        if len(value) != mesh.n_tets:
            raise ValueError("per-tet coefficient has the wrong length")
        return value.astype(float)
    if isinstance(value, Mapping):
        out = np.zeros(mesh.n_tets)
        for region, v in value.items():
            out[mesh.region_marker == region] = v
        return out
    return np.full(mesh.n_tets, float(value))


def _scatter_matrix(mesh: Mesh, local: np.ndarray) -> CsrMatrix:
    rows = np.repeat(mesh.tets, 4, axis=1).ravel()
    cols = np.tile(mesh.tets, (1, 4)).ravel()
    n = mesh.n_vertices
    return CsrMatrix.from_coo(rows, cols, local.ravel(), (n, n))


def _scatter_vector(mesh: Mesh, local: np.ndarray) -> np.ndarray:
    return np.bincount(mesh.tets.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def quadrature_points(mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
    """Physical coordinates (nt, q, 3) of the rule's points on every tet."""
    return np.einsum("qi,tid->tqd", rule.points, mesh.vertices[mesh.tets])


# --------------------------------------------------------------------------
# assembly

def assemble_stiffness(mesh: Mesh, coeff: RegionScalar = 1.0) -> CsrMatrix:
    """``K[k, l] = sum_T c_T |T| grad(lam_k) . grad(lam_l)``."""
    grads, vol = mesh.geometry()
    c = region_values(mesh, coeff) * vol
    local = c[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    return _scatter_matrix(mesh, local)


def assemble_mass(mesh: Mesh, region_weight: RegionScalar = 1.0) -> CsrMatrix:
    _, vol = mesh.geometry()
    ref = (np.ones((4, 4)) + np.eye(4)) / 20.0
    local = (region_values(mesh, region_weight) * vol)[:, None, None] * ref[None]
    return _scatter_matrix(mesh, local)


def assemble_drift(mesh: Mesh, phi: FeFunction, scale: RegionScalar = 1.0,
                   rule: QuadratureRule = DEG2) -> CsrMatrix:
    """Drift operator ``B[k, l] = sum_T s_T int_T lam_l grad(phi) . grad(lam_k)``.

    Row ``k`` is the test function, column ``l`` the trial function, so
    ``B @ p`` gives ``(s p grad(phi), grad(v_k))`` for every basis ``v_k``.
    """
    if phi.mesh is not mesh:
        raise ValueError("phi does not live on this mesh")
    grads, vol = mesh.geometry()
    gphi = phi.gradients()
    s = region_values(mesh, scale) * vol
    test = s[:, None] * np.einsum("td,tkd->tk", gphi, grads)
    trial = rule.weights @ rule.points  # int lam_l / |T|
    local = test[:, :, None] * trial[None, None, :]
    return _scatter_matrix(mesh, local)


def assemble_load(mesh: Mesh, f: ScalarField, rule: QuadratureRule = DEG4,
                  region_weight: RegionScalar = 1.0) -> np.ndarray:
    """``F[k] = sum_T w_T int_T f lam_k`` by quadrature."""
    _, vol = mesh.geometry()
    vol = vol * region_values(mesh, region_weight)
    x = quadrature_points(mesh, rule)
    fx = np.asarray(f(x.reshape(-1, 3)), dtype=float).reshape(x.shape[:2])
    local = vol[:, None] * np.einsum("tq,q,qi->ti", fx, rule.weights, rule.points)
    return _scatter_vector(mesh, local)


def assemble_point_sources(mesh: Mesh, charges) -> np.ndarray:
    """``F[k] = sum_j q_j lam_k(x_j)`` for point charges ``(q_j, x_j)``."""
    out = np.zeros(mesh.n_vertices)
    if not charges:
        return out
    q = np.array([c[0] for c in charges], dtype=float)
    x = np.array([c[1] for c in charges], dtype=float).reshape(-1, 3)
    tet, lam = locate_points(mesh, x)
    np.add.at(out, mesh.tets[tet].ravel(), (q[:, None] * lam).ravel())
    return out


def apply_dirichlet(A: CsrMatrix, b, boundary, values) -> tuple[CsrMatrix, np.ndarray]:
    """Symmetric elimination of prescribed vertex values.

    ``b`` is corrected by the eliminated columns, rows and columns of the
    constrained vertices are zeroed and their diagonal set to one.
    """
    boundary = np.asarray(boundary, dtype=np.int64)
    g = np.broadcast_to(np.asarray(values, dtype=float), boundary.shape)
    n = A.n_rows
    full = np.zeros(n)
    full[boundary] = g
    m = A.to_scipy()
    b = np.asarray(b, dtype=float) - m @ full

    fixed = np.zeros(n, dtype=bool)
    fixed[boundary] = True
    coo = m.tocoo()
    keep = ~(fixed[coo.row] | fixed[coo.col])
    rows = np.concatenate([coo.row[keep], boundary])
    cols = np.concatenate([coo.col[keep], boundary])
    vals = np.concatenate([coo.data[keep], np.ones(len(boundary))])
    b[boundary] = g
    return CsrMatrix.from_coo(rows, cols, vals, A.shape), b


def transfer(coarse: FeFunction, fine_mesh: Mesh) -> FeFunction:
    """Evaluate a coarse P1 function at the fine vertices."""
    if coarse.mesh.level > fine_mesh.level:
        raise ValueError("coarse level exceeds fine level")
    if coarse.mesh is fine_mesh:
        return FeFunction(fine_mesh, coarse.coeffs.copy())
    return FeFunction(fine_mesh, coarse(fine_mesh.vertices))


# --------------------------------------------------------------------------
# norms

def error_l2(u_h: FeFunction, exact: ScalarField, rule: QuadratureRule = DEG4) -> float:
    mesh = u_h.mesh
    _, vol = mesh.geometry()
    x = quadrature_points(mesh, rule)
    uh = np.einsum("qi,ti->tq", rule.points, u_h.coeffs[mesh.tets])
    ue = np.asarray(exact(x.reshape(-1, 3))).reshape(uh.shape)
    return float(np.sqrt(np.sum(vol * ((uh - ue) ** 2 @ rule.weights))))


def error_h1_semi(u_h: FeFunction, exact_grad: ScalarField, rule: QuadratureRule = DEG4) -> float:
    mesh = u_h.mesh
    _, vol = mesh.geometry()
    x = quadrature_points(mesh, rule)
    g = np.asarray(exact_grad(x.reshape(-1, 3))).reshape(mesh.n_tets, len(rule.weights), 3)
    diff = u_h.gradients()[:, None, :] - g
    return float(np.sqrt(np.sum(vol * (np.sum(diff ** 2, axis=2) @ rule.weights))))


def error_h1(u_h: FeFunction, exact: ScalarField, exact_grad: ScalarField,
             rule: QuadratureRule = DEG4) -> float:
    """Full H1 norm of the error, ``sqrt(||e||_0^2 + ||grad e||_0^2)``."""
    return float(np.hypot(error_l2(u_h, exact, rule), error_h1_semi(u_h, exact_grad, rule)))


def _check_same_mesh(u: FeFunction, v: FeFunction):
    if u.mesh is not v.mesh:
        raise ValueError("functions live on different meshes")


def diff_l2(u: FeFunction, v: FeFunction, region_weight: RegionScalar = 1.0) -> float:
    """Exact L2 norm of ``u - v`` (both P1 on the same mesh)."""
    _check_same_mesh(u, v)
    d = u.coeffs - v.coeffs
    return float(np.sqrt(max(d @ (assemble_mass(u.mesh, region_weight) @ d), 0.0)))


def diff_h1_semi(u: FeFunction, v: FeFunction, region_weight: RegionScalar = 1.0) -> float:
    _check_same_mesh(u, v)
    d = u.coeffs - v.coeffs
    return float(np.sqrt(max(d @ (assemble_stiffness(u.mesh, region_weight) @ d), 0.0)))


def diff_h1(u: FeFunction, v: FeFunction, region_weight: RegionScalar = 1.0) -> float:
    return float(np.hypot(diff_l2(u, v, region_weight), diff_h1_semi(u, v, region_weight)))
