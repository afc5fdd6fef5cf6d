"""Quasi-static equilibrium of the growing wall by Newton-Raphson.

The weak form ``int P : dF dV - int T . du dA = 0`` is discretised with the
same linear elements as the transport problem, on the reference
configuration. In axisymmetric mode the hoop stretch ``1 + u_r / R`` enters
``F`` as the third diagonal component; in plane mode ``F_33 = 1`` (plane
strain).

The growth stretch at each Gauss point follows the incremental law and
depends on the current ``J``; the tangent includes that dependence.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import constitutive as cm
from .mesh import Mesh, element_geometry
from .numerics import SolverError, assemble_matrix, assemble_vector, max_threads, solve

log = logging.getLogger(__name__)


class NewtonError(RuntimeError):
    """Newton iterations diverged or the tangent was singular."""


@dataclass(frozen=True)
class GrowthState:
    """Per-Gauss-point growth history, arrays of shape (ne, nq)."""

    theta: np.ndarray
    theta_prev: np.ndarray
    J_prev: np.ndarray

    @classmethod
    def initial(cls, mesh: Mesh) -> "GrowthState":
        one = np.ones((mesh.n_elements, mesh.n_qp))
        return cls(one.copy(), one.copy(), one.copy())


@dataclass(frozen=True)
class GrowthLaw:
    """Incremental growth driven by the SMC density at the Gauss points.

    With ``rho_S=None`` the stretch is frozen at ``theta_prev``.
    """

    theta_prev: np.ndarray
    J_prev: np.ndarray
    rho_S: np.ndarray | None = None
    rho_S_h: float = 3.16e6
    dim: int = 3

    def theta(self, J):
        if self.rho_S is None:
            return np.broadcast_to(self.theta_prev, np.shape(J)).copy()
        return cm.growth_stretch_incremental(self.theta_prev, J, self.J_prev,
                                             self.rho_S, self.rho_S_h, self.dim)

    def dtheta_dF(self, F):
        if self.rho_S is None:
            return None
        return cm.dtheta_dF(F, self.theta_prev, self.J_prev, self.rho_S, self.rho_S_h, self.dim)


@dataclass(frozen=True)
class MechanicsResult:
    u: np.ndarray            # (n_nodes, 2)
    F: np.ndarray            # (ne, nq, 3, 3)
    P: np.ndarray            # (ne, nq, 3, 3)
    theta: np.ndarray        # (ne, nq)
    J: np.ndarray            # (ne, nq)
    iterations: int
    residuals: tuple


class Discretization:
    """Reference-configuration gradient operator for a mesh.

    ``G[e, q, i, J, a, c]`` maps nodal displacement component ``c`` of local
    node ``a`` to ``F_iJ``.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        geo = element_geometry(mesh)
        ne, nq, nen = geo.dN_dx.shape[:3]
        G = np.zeros((ne, nq, 3, 3, nen, 2))
        for c in range(2):
            G[:, :, c, 0, :, c] = geo.dN_dx[..., 0]
            G[:, :, c, 1, :, c] = geo.dN_dx[..., 1]
        if mesh.axisymmetric:
            R = geo.xq[..., 0]
            if (R <= 0).any():
                raise ValueError("axisymmetric mechanics needs r > 0 at quadrature points")
            G[:, :, 2, 2, :, 0] = geo.N[None, :, :] / R[..., None]
        self.G = G.reshape(ne, nq, 9, 2 * nen)
        self.dV = geo.dV
        self.geo = geo
        self.dofs = (2 * mesh.elements[:, :, None] + np.arange(2)).reshape(ne, 2 * nen)
        self.n_dofs = 2 * mesh.n_nodes

    def deformation_gradient(self, u: np.ndarray) -> np.ndarray:
        ue = np.asarray(u, dtype=float).reshape(-1)[self.dofs]
        F = np.einsum("eqmd,ed->eqm", self.G, ue).reshape(ue.shape[0], -1, 3, 3)
        return F + np.eye(3)


def traction_load(mesh: Mesh, tag: str, traction) -> np.ndarray:
    """Nodal forces of a uniform dead-load traction ``(t_0, t_1)`` on a tagged boundary."""
    x = mesh.node_coords
    pairs = mesh.edge_nodes(tag)
    f = np.zeros(2 * mesh.n_nodes)
    if pairs.size == 0:
        return f
    g = 1.0 / np.sqrt(3.0)
    s = np.array([0.5 * (1 - g), 0.5 * (1 + g)])
    Ns = np.column_stack([1 - s, s])
    xa, xb = x[pairs[:, 0]], x[pairs[:, 1]]
    w = np.tile(0.5 * np.linalg.norm(xb - xa, axis=1)[:, None], (1, 2))
    if mesh.axisymmetric:
        w = w * 2.0 * np.pi * np.einsum("qa,ea->eq", Ns, np.column_stack([xa[:, 0], xb[:, 0]]))
    nodal = np.einsum("eq,qa->ea", w, Ns)
    for c in range(2):
        f[c::2] += assemble_vector(mesh.n_nodes, pairs, traction[c] * nodal)
    return f


def _constitutive(F, law, H, mat, growth_dim, tangent):
    J = np.linalg.det(F)
    if np.any(J <= 0):
        raise cm.StepRejected("inverted deformation (J <= 0)")
    theta = law.theta(J)
    if not tangent:
        return cm.pk1_stress(F, theta, H, mat, growth_dim), None, theta, J
    P, dPdF, dPdt = cm.stress_and_tangents(F, theta, H, mat, growth_dim)
    dth = law.dtheta_dF(F)
    if dth is not None:
        dPdF = dPdF + np.einsum("...ij,...kl->...ijkl", dPdt, dth)
    return P, dPdF, theta, J


def _chunked(F, law, H, mat, growth_dim, tangent):
    threads = max_threads()
    ne = F.shape[0]
    if threads <= 1 or ne < 2 * threads:
        return _constitutive(F, law, H, mat, growth_dim, tangent)
    bounds = np.linspace(0, ne, threads + 1).astype(int)

    def part(k):
        s = slice(bounds[k], bounds[k + 1])
        sub = GrowthLaw(law.theta_prev[s], law.J_prev[s],
                        None if law.rho_S is None else law.rho_S[s], law.rho_S_h, law.dim)
        return _constitutive(F[s], sub, H, mat, growth_dim, tangent)

    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(part, range(threads)))
    out = []
    for k in range(4):
        out.append(None if parts[0][k] is None else np.concatenate([p[k] for p in parts]))
    return tuple(out)


def evaluate(disc: Discretization, u, law: GrowthLaw, H, mat, growth_dim, tangent=True):
    """Internal force vector, tangent matrix and Gauss-point data."""
    F = disc.deformation_gradient(u)
    P, A, theta, J = _chunked(F, law, H, mat, growth_dim, tangent)
    ne, nq = F.shape[:2]
    Pv = P.reshape(ne, nq, 9)
    fe = np.einsum("eqm,eqmd,eq->ed", Pv, disc.G, disc.dV)
    f = assemble_vector(disc.n_dofs, disc.dofs, fe)
    K = None
    if tangent:
        Am = A.reshape(ne, nq, 9, 9)
        GA = np.einsum("eqmc,eqmn->eqcn", disc.G, Am)
        Ke = np.einsum("eqcn,eqnd,eq->ecd", GA, disc.G, disc.dV)
        K = assemble_matrix(disc.n_dofs, disc.dofs, Ke)
    return f, K, F, P, theta, J


def newton_solve(mesh: Mesh, mat: cm.MaterialParams, law: GrowthLaw,
                 fixed: dict, traction: dict | None = None, u0: np.ndarray | None = None,
                 growth_dim: int = 3, max_iters: int = 25, atol: float = 1e-10,
                 rtol: float = 1e-8, disc: Discretization | None = None,
                 H: np.ndarray | None = None) -> MechanicsResult:
    """Solve for nodal displacements.

    Parameters
    ----------
    fixed : {dof: value}
        Prescribed displacement components, dof ``2*node + component``.
    traction : {tag: (t0, t1)}
        Dead-load tractions on tagged boundaries (MPa).
    u0 : initial guess, shape (n_nodes, 2); prescribed values are imposed on it.

    Converged when ``||r_free|| <= max(atol, rtol * ||r_free at start||)``.
    ``iterations`` counts residual evaluations.
    """
    disc = disc or Discretization(mesh)
    H = cm.structure_tensors(mat, mesh.axial_axis) if H is None else H
    n = disc.n_dofs
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float).reshape(-1)
    fixed_dofs = np.fromiter(fixed.keys(), dtype=np.int64, count=len(fixed))
    u[fixed_dofs] = np.fromiter(fixed.values(), dtype=float, count=len(fixed))
    free = np.setdiff1d(np.arange(n), fixed_dofs)
    f_ext = np.zeros(n)
    for tag, t in (traction or {}).items():
        f_ext += traction_load(mesh, tag, t)

    history = []
    tol = None
    for it in range(1, max_iters + 1):
        f, K, F, P, theta, J = evaluate(disc, u, law, H, mat, growth_dim)
        r = f - f_ext
        norm = float(np.linalg.norm(r[free]))
        history.append(norm)
        if tol is None:
            tol = max(atol, rtol * norm)
        if len(history) > 2 and history[-2] > 0 and history[-3] > 0:
            log.debug("newton %d: |r| = %.3e, rate %.3f", it, norm,
                      np.log(norm / history[-2]) / np.log(history[-2] / history[-3])
                      if norm > 0 and history[-2] != history[-3] else float("nan"))
        if norm <= tol:
            return MechanicsResult(u.reshape(-1, 2), F, P, theta, J, it, tuple(history))
        if not np.isfinite(norm):
            raise NewtonError("non-finite residual")
        Kff = sp.csr_matrix(K)[free][:, free]
        try:
            du = solve(Kff, -r[free])
        except SolverError as exc:
            raise NewtonError(f"singular tangent: {exc}") from exc
        u = _line_search(disc, u, du, free, f_ext, norm, law, H, mat, growth_dim)
    raise NewtonError(f"Newton did not converge in {max_iters} iterations "
                      f"(|r| = {history[-1]:.3e}, target {tol:.3e})")


def _line_search(disc, u, du, free, f_ext, norm, law, H, mat, growth_dim, max_cuts=12):
    """Backtrack until the step is admissible and does not increase the residual."""
    step = 1.0
    fallback = None
    for _ in range(max_cuts):
        trial = u.copy()
        trial[free] += step * du
        try:
            f = evaluate(disc, trial, law, H, mat, growth_dim, tangent=False)[0]
        except cm.StepRejected:
            step *= 0.5
            continue
        trial_norm = float(np.linalg.norm((f - f_ext)[free]))
        if trial_norm <= norm:
            return trial
        if fallback is None:
            fallback = trial
        step *= 0.5
    if fallback is None:
        raise NewtonError("no admissible Newton step")
    return fallback


def fixed_dofs(mesh: Mesh, bc: dict) -> dict:
    """Prescribed dofs from ``{tag: kind}``.

    ``kind`` is ``"fixed"`` (both components), ``"fix_0"`` / ``"fix_1"``
    (one component) or ``"free"``.
    """
    out = {}
    for tag, kind in bc.items():
        if kind == "free":
            continue
        comps = {"fixed": (0, 1), "fix_0": (0,), "fix_1": (1,)}.get(kind)
        if comps is None:
            raise ValueError(f"unknown boundary condition {kind!r} on {tag!r}")
        for node in mesh.tagged_nodes(tag):
            for c in comps:
                out[2 * int(node) + c] = 0.0
    return out
