"""CSR matrices and Jacobi-preconditioned Krylov solvers."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Compressed sparse row matrix.

    Column indices are strictly increasing within each row and there are no
    duplicate entries. Products go through scipy's row-serial CSR kernel.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "CsrMatrix":
        """Build from triplets, summing duplicates."""
        m = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls._from_scipy(m)

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        m = sp.csr_matrix(np.asarray(a, dtype=float))
        m.sort_indices()
        return cls._from_scipy(m)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        return cls._from_scipy(sp.identity(n, format="csr", dtype=float))

    @classmethod
    def _from_scipy(cls, m) -> "CsrMatrix":
        m = m.tocsr()
        return cls(m.shape[0], m.shape[1], m.indptr.astype(np.int64),
                   m.indices.astype(np.int64), m.data.astype(float))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def __add__(self, other: "CsrMatrix") -> "CsrMatrix":
        return CsrMatrix._from_scipy((self.to_scipy() + other.to_scipy()).tocsr())

    def __mul__(self, scalar: float) -> "CsrMatrix":
        return CsrMatrix(self.n_rows, self.n_cols, self.row_ptr, self.col_idx,
                         self.values * scalar)

    __rmul__ = __mul__

    def __matmul__(self, x):
        return spmv(self, x)


def spmv(A: CsrMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (A.n_cols,):
        raise ValueError(f"dimension mismatch: matrix has {A.n_cols} columns, vector {x.shape}")
    return A.to_scipy() @ x


@dataclass
class SolverReport:
    iterations: int
    final_relative_residual: float
    converged: bool
    breakdown: bool = False
    residual_history: list[float] | None = None


def _jacobi(A: CsrMatrix):
    d = A.diagonal()
    if np.any(d == 0):
        d = np.where(d == 0, 1.0, d)
    inv = 1.0 / d
    return lambda r: inv * r


def solve_cg(A: CsrMatrix, b, tol: float = DEFAULT_TOL, max_iter: int | None = None,
             precond: str | None = "jacobi", x0=None, record_history: bool = False):
    """Preconditioned conjugate gradients for SPD ``A``.

    Stops when ``||b - A x|| / ||b|| <= tol``. Breakdown (nonpositive
    curvature) ends the iteration with ``converged=False``.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    Asp = A.to_scipy()
    M = _jacobi(A) if precond == "jacobi" else (lambda r: r)

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, True, residual_history=[0.0] if record_history else None)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - Asp @ x
    history = [np.linalg.norm(r) / bnorm]
    if history[-1] <= tol:
        return x, SolverReport(0, history[-1], True, residual_history=history if record_history else None)
    z = M(r)
    p = z.copy()
    rz = r @ z
    it = 0
    breakdown = False
    while it < max_iter:
        Ap = Asp @ p
        curv = p @ Ap
        if curv <= 0.0:
            breakdown = True
            break
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        it += 1
        history.append(np.linalg.norm(r) / bnorm)
        if history[-1] <= tol:
            break
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new

    rel = np.linalg.norm(b - Asp @ x) / bnorm
    return x, SolverReport(it, rel, rel <= tol and not breakdown, breakdown,
                           history if record_history else None)


def solve_bicgstab(A: CsrMatrix, b, tol: float = DEFAULT_TOL, max_iter: int | None = None,
                   precond: str | None = "jacobi", x0=None):
    """Right-preconditioned BiCGStab for general nonsingular ``A``.

    On breakdown (vanishing ``rho`` or ``omega``) the iteration restarts once
    from the current iterate with a perturbed shadow residual.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    Asp = A.to_scipy()
    M = _jacobi(A) if precond == "jacobi" else (lambda r: r)

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, True)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    rng = np.random.default_rng(12345)
    total = 0
    restarts = 0
    breakdown = False
    tiny = np.finfo(float).tiny * 1e10

    while True:
        r = b - Asp @ x
        if np.linalg.norm(r) / bnorm <= tol:
            break
        r_hat = r.copy()
        if restarts:
            r_hat += 1e-3 * np.linalg.norm(r) / np.sqrt(n) * rng.standard_normal(n)
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        breakdown = False
        while total < max_iter:
            rho_new = r_hat @ r
            if abs(rho_new) < tiny or omega == 0.0:
                breakdown = True
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            p_hat = M(p)
            v = Asp @ p_hat
            denom = r_hat @ v
            if abs(denom) < tiny:
                breakdown = True
                break
            alpha = rho / denom
            s = r - alpha * v
            total += 1
            if np.linalg.norm(s) / bnorm <= tol:
                x += alpha * p_hat
                r = s
                break
            s_hat = M(s)
            t = Asp @ s_hat
            tt = t @ t
            if tt == 0.0:
                breakdown = True
                x += alpha * p_hat
                break
            omega = (t @ s) / tt
            x += alpha * p_hat + omega * s_hat
            r = s - omega * t
            if np.linalg.norm(r) / bnorm <= tol:
                break
        if breakdown and restarts == 0 and total < max_iter:
            restarts = 1
            continue
        break

    if not np.all(np.isfinite(x)):
        x = np.nan_to_num(x)
    rel = np.linalg.norm(b - Asp @ x) / bnorm
    return x, SolverReport(total, rel, bool(rel <= tol), breakdown)


def write_matrix_market(A: CsrMatrix, path) -> Path:
    """Coordinate-format MatrixMarket dump (1-based indices)."""
    path = Path(path)
    m = A.to_scipy().tocoo()
    lines = ["%%MatrixMarket matrix coordinate real general",
             f"{A.n_rows} {A.n_cols} {A.nnz}"]
    lines += [f"{i + 1} {j + 1} {v!r}" for i, j, v in zip(m.row.tolist(), m.col.tolist(), m.data.tolist())]
    path.write_text("\n".join(lines) + "\n")
    return path
