"""Structured tetrahedral meshes of the unit cube.

Each cube cell of the uniform ``(2**L)**3`` grid is split into the six
Kuhn (Freudenthal) tetrahedra sharing the diagonal from the cell's lower
corner to its upper corner. Because every cell uses the same diagonal, the
level ``L + 1`` mesh refines the level ``L`` mesh: each coarse tetrahedron
is the union of eight fine ones.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_LEVEL = 7

SOLUTE = 1
SOLVENT = 2

# Permutations of the axes; tet t walks from the low corner along
# axes PERMS[t][0], PERMS[t][1], PERMS[t][2].
PERMS = tuple(itertools.permutations(range(3)))


class MeshCapacityError(ValueError):
    """Requested refinement level exceeds the memory guard."""


class PointOutsideDomainError(ValueError):
    """A point lies outside the unit cube."""


def _reference_tets() -> tuple[np.ndarray, np.ndarray]:
    """Local corner offsets (6, 4, 3) of the Kuhn tets, positively oriented,
    and the matrices mapping local cube coordinates to barycentrics."""
    offsets = []
    for perm in PERMS:
        path = [np.zeros(3, dtype=int)]
        for axis in perm:
            step = path[-1].copy()
            step[axis] += 1
            path.append(step)
        corners = np.array(path)
        jac = (corners[1:] - corners[0]).T
        if np.linalg.det(jac) < 0:
            corners[[2, 3]] = corners[[3, 2]]
        offsets.append(corners)
    offsets = np.array(offsets)

    # lam = T @ [1, xi] with T (4, 4) per tet
    to_bary = np.empty((6, 4, 4))
    for t, corners in enumerate(offsets):
        affine = np.vstack([np.ones(4), corners.T.astype(float)])
        to_bary[t] = np.linalg.inv(affine)
    return offsets, to_bary


_TET_OFFSETS, _TO_BARY = _reference_tets()


@dataclass(frozen=True, eq=False)
class Mesh:
    """Tetrahedral mesh of [0, 1]^3.

    Attributes
    ----------
    vertices : (nv, 3) float array
    tets : (nt, 4) int array, positively oriented
    boundary_vertex : (nv,) bool array
    region_marker : (nt,) int array, ``SOLUTE`` or ``SOLVENT``
    level : refinement level, ``h = 2**-level``
    """

    vertices: np.ndarray
    tets: np.ndarray
    boundary_vertex: np.ndarray
    region_marker: np.ndarray
    level: int
    _geometry: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def h(self) -> float:
        return 2.0 ** -self.level

    @property
    def n_cells(self) -> int:
        return 2 ** self.level

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def geometry(self) -> tuple[np.ndarray, np.ndarray]:
        """Barycentric gradients (nt, 4, 3) and volumes (nt,), cached."""
        if "grads" not in self._geometry:
            x = self.vertices[self.tets]
            jac = np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))
            inv = np.linalg.inv(jac)
            grads = np.empty((self.n_tets, 4, 3))
            grads[:, 1:] = inv
            grads[:, 0] = -inv.sum(axis=1)
            self._geometry["grads"] = grads
            self._geometry["volumes"] = np.linalg.det(jac) / 6.0
        return self._geometry["grads"], self._geometry["volumes"]


@dataclass(frozen=True)
class PointLocation:
    tet_index: int
    barycentric: np.ndarray


def _vertex_id(i, j, k, n):
    return i + (n + 1) * (j + (n + 1) * k)


def build_cube_mesh(level: int, region_marker: np.ndarray | None = None) -> Mesh:
    """Kuhn triangulation of the unit cube with ``2**level`` cells per axis.

    Tet ``6 * c + t`` belongs to cube cell ``c = ci + n * (cj + n * ck)``.
    """
    if level < 0:
        raise ValueError(f"level must be nonnegative, got {level}")
    if level > MAX_LEVEL:
        raise MeshCapacityError(f"level {level} exceeds the guard of {MAX_LEVEL}")
    n = 2 ** level
    h = 2.0 ** -level

    idx = np.arange(n + 1)
    # vertex id = i + (n+1) * (j + (n+1) * k)
    kk, jj, ii = np.meshgrid(idx, idx, idx, indexing="ij")
    grid = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
    vertices = grid * h
    boundary = np.any((grid == 0) | (grid == n), axis=1)

    cidx = np.arange(n)
    ck, cj, ci = np.meshgrid(cidx, cidx, cidx, indexing="ij")
    cells = np.stack([ci.ravel(), cj.ravel(), ck.ravel()], axis=1)
    corners = cells[:, None, None, :] + _TET_OFFSETS[None]
    tets = _vertex_id(corners[..., 0], corners[..., 1], corners[..., 2], n)
    tets = tets.reshape(-1, 4).astype(np.int64)

    if region_marker is None:
        region_marker = np.full(len(tets), SOLVENT, dtype=np.int64)
    elif len(region_marker) != len(tets):
        raise ValueError("region_marker must have one entry per tet")

    return Mesh(vertices=vertices, tets=tets, boundary_vertex=boundary,
                region_marker=np.asarray(region_marker), level=level)


def with_solute_box(mesh: Mesh, lower, upper) -> Mesh:
    """Copy of ``mesh`` with tets whose barycenter lies in the box
    ``[lower, upper]`` marked as solute."""
    centers = mesh.vertices[mesh.tets].mean(axis=1)
    inside = np.all((centers >= np.asarray(lower)) & (centers <= np.asarray(upper)), axis=1)
    markers = np.where(inside, SOLUTE, SOLVENT).astype(np.int64)
    return Mesh(mesh.vertices, mesh.tets, mesh.boundary_vertex, markers, mesh.level)


def locate_points(mesh: Mesh, points: np.ndarray, tol: float = 1e-12):
    """Vectorized point location on a structured cube mesh.

    Returns ``(tet_index, barycentric)`` with shapes ``(m,)`` and ``(m, 4)``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(pts < -tol) or np.any(pts > 1.0 + tol):
        raise PointOutsideDomainError("point outside [0, 1]^3")
    pts = np.clip(pts, 0.0, 1.0)
    n = mesh.n_cells
    scaled = pts * n
    cell = np.minimum(np.floor(scaled).astype(np.int64), n - 1)
    xi = scaled - cell

    homog = np.concatenate([np.ones((len(pts), 1)), xi], axis=1)
    bary = np.einsum("tij,mj->mti", _TO_BARY, homog)  # (m, 6, 4)
    best = np.argmax(bary.min(axis=2), axis=1)
    lam = bary[np.arange(len(pts)), best]
    # renormalize rounding so weights sum to one exactly-ish
    lam = np.where(np.abs(lam) < 1e-15, 0.0, lam)
    lam /= lam.sum(axis=1, keepdims=True)

    cell_id = cell[:, 0] + n * (cell[:, 1] + n * cell[:, 2])
    return 6 * cell_id + best, lam


def locate_point(mesh: Mesh, x) -> PointLocation:
    """Find a tet containing ``x`` and its barycentric coordinates there."""
    tet, lam = locate_points(mesh, np.asarray(x, dtype=float).reshape(1, 3))
    return PointLocation(tet_index=int(tet[0]), barycentric=lam[0])


def boundary_vertices(mesh: Mesh) -> np.ndarray:
    return np.flatnonzero(mesh.boundary_vertex)


def write_vtk(mesh: Mesh, path, point_data: dict[str, np.ndarray] | None = None,
              title: str = "pnp_twogrid") -> Path:
    """Write a legacy ASCII VTK unstructured grid (cell type 10)."""
    path = Path(path)
    point_data = point_data or {}
    lines = [
        "# vtk DataFile Version 2.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines.append(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}")
    lines += ["4 %d %d %d %d" % tuple(t) for t in mesh.tets.tolist()]
    lines.append(f"CELL_TYPES {mesh.n_tets}")
    lines += ["10"] * mesh.n_tets
    lines.append(f"CELL_DATA {mesh.n_tets}")
    lines.append("SCALARS region_marker int 1")
    lines.append("LOOKUP_TABLE default")
    lines += [str(int(r)) for r in mesh.region_marker]
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (mesh.n_vertices,):
                raise ValueError(f"field {name!r} has shape {values.shape}")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [repr(v) for v in values.tolist()]
    path.write_text("\n".join(lines) + "\n")
    return path
