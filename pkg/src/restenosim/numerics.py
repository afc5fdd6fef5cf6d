"""Sparse assembly and linear solves shared by transport and mechanics.

Assembled operators are ``scipy.sparse.csr_matrix`` in canonical form
(sorted, unique column indices per row). Accumulation sorts every
contribution by ``(row, col, value)`` before summing, so the result does not
depend on the order in which elements were visited.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """A linear solve failed."""


class SingularMatrixError(SolverError):
    def __init__(self, dof: int, msg: str = ""):
        self.dof = dof
        super().__init__(msg or f"singular matrix: zero pivot at dof {dof}")


def max_threads() -> int:
    """Assembly thread cap from ``RESTENOSIM_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("RESTENOSIM_THREADS", "1")))
    except ValueError:
        return 1


def _reduce(rows, cols, vals, n, m):
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size == 0:
        return sp.csr_matrix((n, m))
    key = rows * m + cols
    start = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    summed = np.add.reduceat(vals, start)
    A = sp.csr_matrix((summed, (rows[start], cols[start])), shape=(n, m))
    A.sort_indices()
    return A


def assemble_matrix(n: int, dofs: np.ndarray, blocks: np.ndarray) -> sp.csr_matrix:
    """Sum dense element blocks into an ``n x n`` sparse matrix.

    Parameters
    ----------
    dofs : (ne, k) global dof indices per element
    blocks : (ne, k, k) element matrices
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    blocks = np.asarray(blocks, dtype=float)
    if dofs.size and (dofs.min() < 0 or dofs.max() >= n):
        raise ValueError(f"dof map exceeds matrix dimension {n}")
    if blocks.shape != dofs.shape + dofs.shape[-1:]:
        raise ValueError(f"block shape {blocks.shape} does not match dof map {dofs.shape}")
    k = dofs.shape[-1] if dofs.ndim == 2 else 0
    rows = np.repeat(dofs, k, axis=-1).ravel() if k else np.empty(0, np.int64)
    cols = np.tile(dofs, (1, k)).ravel() if k else np.empty(0, np.int64)
    return _reduce(rows, cols, blocks.ravel(), n, n)


def assemble_vector(n: int, dofs: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """Sum element vectors (ne, k) into a length-``n`` array, order independent."""
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    vals = np.asarray(blocks, dtype=float).ravel()
    if dofs.size and (dofs.min() < 0 or dofs.max() >= n):
        raise ValueError(f"dof map exceeds vector dimension {n}")
    if dofs.size != vals.size:
        raise ValueError("dof map and element vectors differ in size")
    out = np.zeros(n)
    if dofs.size:
        order = np.lexsort((vals, dofs))
        d, v = dofs[order], vals[order]
        start = np.flatnonzero(np.r_[True, d[1:] != d[:-1]])
        out[d[start]] = np.add.reduceat(v, start)
    return out


def assemble(n: int, contributions) -> tuple[sp.csr_matrix, np.ndarray]:
    """Assemble a stream of ``(dof_map, element_matrix[, element_vector])``.

    Returns the global matrix and right-hand side (zero when no vectors were
    given).
    """
    rows, cols, vals, vd, vv = [], [], [], [], []
    for item in contributions:
        dof, Ke = np.asarray(item[0], dtype=np.int64), np.asarray(item[1], dtype=float)
        if dof.size and (dof.min() < 0 or dof.max() >= n):
            raise ValueError(f"dof map {dof} exceeds dimension {n}")
        if Ke.shape != (dof.size, dof.size):
            raise ValueError(f"element matrix shape {Ke.shape} does not match dofs")
        rows.append(np.repeat(dof, dof.size))
        cols.append(np.tile(dof, dof.size))
        vals.append(Ke.ravel())
        if len(item) > 2 and item[2] is not None:
            vd.append(dof)
            vv.append(np.asarray(item[2], dtype=float))
    cat = lambda a, dt: np.concatenate(a) if a else np.empty(0, dt)  # noqa: E731
    A = _reduce(cat(rows, np.int64), cat(cols, np.int64), cat(vals, float), n, n)
    b = assemble_vector(n, cat(vd, np.int64), cat(vv, float))
    return A, b


@dataclass
class LinearSystem:
    """Sparse system with Dirichlet constraints ``{dof: value}``."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: dict = field(default_factory=dict)

    def constrained(self, symmetric: bool = False) -> "LinearSystem":
        """Copy with constrained rows replaced by identity rows.

        With ``symmetric=True`` the constrained columns are eliminated too,
        moving their known contribution to the right-hand side.
        """
        A = sp.csr_matrix(self.matrix, dtype=float, copy=True)
        b = np.array(self.rhs, dtype=float, copy=True)
        if not self.dirichlet:
            return LinearSystem(A, b, {})
        dofs = np.fromiter(self.dirichlet.keys(), dtype=np.int64)
        vals = np.fromiter(self.dirichlet.values(), dtype=float)
        if symmetric:
            g = np.zeros(A.shape[0])
            g[dofs] = vals
            b -= A @ g
        mask = np.zeros(A.shape[0], dtype=bool)
        mask[dofs] = True
        keep = sp.diags((~mask).astype(float))
        A = keep @ A
        if symmetric:
            A = A @ keep
        A = (A + sp.diags(mask.astype(float))).tocsr()
        A.sort_indices()
        b[dofs] = vals
        return LinearSystem(A, b, dict(self.dirichlet))


def _zero_pivot(A) -> int:
    n = A.shape[0]
    empty = np.flatnonzero(np.diff(A.indptr) == 0)
    if empty.size:
        return int(empty[0])
    empty_cols = np.flatnonzero(np.diff(A.tocsc().indptr) == 0)
    if empty_cols.size:
        return int(empty_cols[0])
    if n <= 4000:
        _, _, U = scipy.linalg.lu(A.toarray())
        d = np.abs(np.diag(U))
        return int(np.argmin(d))
    return -1


def solve(system: LinearSystem | sp.spmatrix, rhs: np.ndarray | None = None,
          symmetric: bool = False) -> np.ndarray:
    """Direct sparse LU solve with a residual check.

    Accepts a ``LinearSystem`` (constraints applied here) or a bare
    matrix plus right-hand side.
    """
    if not isinstance(system, LinearSystem):
        system = LinearSystem(sp.csr_matrix(system), np.asarray(rhs, dtype=float))
    sysc = system.constrained(symmetric) if system.dirichlet else system
    A = sp.csc_matrix(sysc.matrix)
    b = np.asarray(sysc.rhs, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible system: matrix {A.shape}, rhs {b.shape}")
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        x = spla.splu(A).solve(b)
    except RuntimeError as exc:
        raise SingularMatrixError(_zero_pivot(A), f"singular matrix ({exc}); "
                                  f"zero pivot near dof {_zero_pivot(A)}") from None
    res = np.linalg.norm(A @ x - b)
    if not np.isfinite(x).all() or res > 1e-10 * (np.linalg.norm(b) + 1.0):
        raise SolverError(f"direct solve residual {res:.3e} exceeds tolerance")
    for dof, val in sysc.dirichlet.items():
        x[dof] = val
    return x


def solve_cg(A: sp.spmatrix, b: np.ndarray, tol: float = 1e-12,
             maxiter: int | None = None) -> tuple[np.ndarray, float]:
    """Jacobi-preconditioned conjugate gradients for SPD systems.

    Returns the solution and the achieved relative residual.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b), 0.0
    d = A.diagonal()
    if (d <= 0).any():
        raise SolverError("CG requires a positive diagonal")
    M = sp.diags(1.0 / d)
    x, info = spla.cg(A, b, rtol=tol, atol=0.0, M=M, maxiter=maxiter or 10 * len(b))
    achieved = float(np.linalg.norm(A @ x - b) / nb)
    if info != 0:
        raise SolverError(f"CG did not converge (relative residual {achieved:.3e})")
    return x, achieved


def lumped(A: sp.spmatrix) -> np.ndarray:
    """Row sums."""
    return np.asarray(A.sum(axis=1)).ravel()


def dump_matrix_market(A: sp.spmatrix, path) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))
