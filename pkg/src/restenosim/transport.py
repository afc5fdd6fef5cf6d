"""PDGF, ECM and SMC transport in the arterial wall.

Each species is advanced by one semi-implicit backward-Euler step in which
every coefficient other than the updated field is taken from step ``n``::

    [M + dt L + dt P] c_P'   = M c_P
    [M + dt T]        rho_E' = M rho_E + dt R
    [M + dt K - dt Q] rho_S' = M rho_S

All operators are integrated on the configuration given by ``coords``
(the current, deformed configuration in a coupled run).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fct
from .mesh import Mesh, element_geometry
from .numerics import assemble_matrix, assemble_vector, solve


class TransportError(RuntimeError):
    """A transport update produced an inadmissible field."""


@dataclass(frozen=True)
class TransportParams:
    """Transport constants; defaults are the reference parameter set.

    Units: mm, day, mol, cells.
    """

    D_P: float = 0.01
    alpha: float = 1.0e-13
    beta: float = 5.0e-8
    gamma: float = 5.0e17
    chi: float = 1.0e19
    kappa: float = 1.0e-2
    rho_E_th: float = 1.1 * 7.0e-9
    rho_S_h: float = 3.16e6

    def __post_init__(self):
        for name in ("D_P", "alpha", "beta", "gamma", "chi", "kappa", "rho_E_th", "rho_S_h"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"transport parameter {name} must be >= 0")
        if not self.rho_E_th > 0 or not self.rho_S_h > 0:
            raise ValueError("rho_E_th and rho_S_h must be > 0")


@dataclass(frozen=True)
class FieldState:
    """Nodal transport fields at one time level."""

    c_P: np.ndarray
    rho_E: np.ndarray
    rho_S: np.ndarray
    time: float = 0.0

    def check(self, params: TransportParams, tol: float = 1e-12) -> None:
        """Raise ``TransportError`` if an invariant is violated."""
        if (self.c_P < 0).any():
            raise TransportError(f"negative PDGF concentration {self.c_P.min():.3e}")
        if (self.rho_S < 0).any():
            raise TransportError(f"negative SMC density {self.rho_S.min():.3e}")
        th = params.rho_E_th
        if (self.rho_E < -tol * th).any() or (self.rho_E > th * (1 + tol)).any():
            raise TransportError("ECM density outside [0, rho_E_th]")


@dataclass(frozen=True)
class TransportOptions:
    """``stabilization`` is ``"fct"`` or ``"none"``."""

    stabilization: str = "fct"
    prelimit: bool = True
    fct_pdgf: bool = True
    pdgf_influx: tuple = ()   # ((tag, flux mol/mm^2/day), ...)
    smc_influx: tuple = ()    # ((tag, flux cells/mm^2/day), ...)

    def __post_init__(self):
        if self.stabilization not in ("fct", "none"):
            raise ValueError(f"unknown stabilization {self.stabilization!r}")


def _coefficients(geo, mesh, state, params):
    cP = geo.interpolate(mesh, state.c_P)
    rE = geo.interpolate(mesh, state.rho_E)
    rS = geo.interpolate(mesh, state.rho_S)
    grad_E = geo.gradient(mesh, state.rho_E)
    deficit = 1.0 - rE / params.rho_E_th
    return cP, rE, rS, grad_E, deficit


def element_blocks(mesh: Mesh, state: FieldState, params: TransportParams,
                   coords: np.ndarray | None = None) -> dict:
    """Element matrices for every element, keyed ``M, L, P, T, K, Q, R``.

    Matrices have shape (ne, nen, nen), ``R`` has shape (ne, nen).
    ``K[e, i, j] = int chi c_P (1 - rho_E/rho_E_th) (grad N_i . grad rho_E) N_j``.
    """
    geo = element_geometry(mesh, coords)
    cP, rE, rS, grad_E, deficit = _coefficients(geo, mesh, state, params)
    N, dV = geo.N, geo.dV
    NN = np.einsum("qa,qb->qab", N, N)

    def mass(weight):
        return np.einsum("eq,qab->eab", weight * dV, NN)

    chemo = params.chi * cP * deficit
    gN_gE = np.einsum("eqai,eqi->eqa", geo.dN_dx, grad_E)
    return {
        "M": mass(np.ones_like(dV)),
        "L": params.D_P * np.einsum("eqai,eqbi,eq->eab", geo.dN_dx, geo.dN_dx, dV),
        "P": mass(params.alpha * rS),
        "T": mass(params.beta * rS / params.rho_E_th + params.gamma * cP),
        "K": np.einsum("eq,eqa,qb->eab", chemo * dV, gN_gE, N),
        "Q": mass(params.kappa * cP * deficit),
        "R": np.einsum("eq,qa->ea", params.beta * rS * dV, N),
    }


def element_matrices(mesh: Mesh, element: int, state: FieldState, params: TransportParams,
                     coords: np.ndarray | None = None) -> dict:
    """The seven element blocks of a single element."""
    blocks = element_blocks(mesh, state, params, coords)
    return {k: v[element] for k, v in blocks.items()}


def assemble_operators(mesh: Mesh, state: FieldState, params: TransportParams,
                       coords: np.ndarray | None = None) -> dict:
    """Global sparse ``M, L, P, T, K, Q`` and vector ``R``."""
    blocks = element_blocks(mesh, state, params, coords)
    n = mesh.n_nodes
    ops = {k: assemble_matrix(n, mesh.elements, v) for k, v in blocks.items() if k != "R"}
    ops["R"] = assemble_vector(n, mesh.elements, blocks["R"])
    return ops


def boundary_load(mesh: Mesh, tag: str, flux: float,
                  coords: np.ndarray | None = None) -> np.ndarray:
    """Consistent nodal load of a uniform normal influx over a tagged boundary."""
    x = mesh.node_coords if coords is None else coords
    pairs = mesh.edge_nodes(tag)
    out = np.zeros(mesh.n_nodes)
    if pairs.size == 0:
        return out
    g = 1.0 / np.sqrt(3.0)
    s = np.array([0.5 * (1 - g), 0.5 * (1 + g)])
    Ns = np.column_stack([1 - s, s])  # (2 gp, 2 nodes)
    xa, xb = x[pairs[:, 0]], x[pairs[:, 1]]
    length = np.linalg.norm(xb - xa, axis=1)
    w = np.tile(0.5 * length[:, None], (1, 2))
    if mesh.axisymmetric:
        r = np.einsum("qa,ea->eq", Ns, np.column_stack([xa[:, 0], xb[:, 0]]))
        w = w * 2.0 * np.pi * r
    vals = flux * np.einsum("eq,qa->ea", w, Ns)
    return assemble_vector(mesh.n_nodes, pairs, vals)


def _nodal_measure(mesh, coords):
    geo = element_geometry(mesh, coords)
    return assemble_vector(mesh.n_nodes, mesh.elements,
                           np.einsum("eq,qa->ea", geo.dV, geo.N))


def _sources(mesh, influx, coords):
    b = np.zeros(mesh.n_nodes)
    for tag, flux in influx:
        b += boundary_load(mesh, tag, float(flux), coords)
    return b


def _advance(M, A, u, dt, source, stabilized, prelimit):
    if stabilized:
        return fct.fct_step(M, A, u, dt, use_prelimit=prelimit, source=source).u
    return u + solve(M + dt * A, dt * (source - A @ u))


def _accept(u, scale, name, stabilized):
    if not stabilized:
        return u
    floor = -1e-12 * scale
    if (u < floor).any():
        raise TransportError(f"{name}: negative value {u.min():.3e} after flux correction")
    return np.where(u < 0, 0.0, u)


def step_pdgf(mesh: Mesh, state: FieldState, params: TransportParams, dt: float,
              coords: np.ndarray | None = None,
              options: TransportOptions = TransportOptions(), ops: dict | None = None) -> np.ndarray:
    """``[M + dt L + dt P] c_P' = M c_P`` (+ boundary influx, flux corrected)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ops = ops or assemble_operators(mesh, state, params, coords)
    stab = options.stabilization == "fct" and options.fct_pdgf
    b = _sources(mesh, options.pdgf_influx, coords)
    u = _advance(ops["M"], (ops["L"] + ops["P"]).tocsr(), state.c_P, dt, b, stab,
                 options.prelimit)
    return _accept(u, max(np.abs(state.c_P).max(), 1e-300), "PDGF", stab)


def step_ecm(mesh: Mesh, state: FieldState, params: TransportParams, dt: float,
             coords: np.ndarray | None = None) -> np.ndarray:
    """``[M + dt T] rho_E' = M rho_E + dt R`` with row-lumped operators.

    The ECM equation has no spatial coupling, so lumping turns it into one
    scalar recurrence per node; this keeps ``0 <= rho_E <= rho_E_th``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    geo = element_geometry(mesh, coords)
    cP = geo.interpolate(mesh, state.c_P)
    rS = geo.interpolate(mesh, state.rho_S)
    n = mesh.n_nodes

    def nodal(weight):
        return assemble_vector(n, mesh.elements, np.einsum("eq,qa->ea", weight * geo.dV, geo.N))

    m = nodal(np.ones_like(cP))
    synth = nodal(params.beta * rS)          # lumped R
    degr = nodal(params.gamma * cP)
    th = params.rho_E_th
    rho = state.rho_E
    # direct quotient: the increment form cancels when degradation is stiff
    return (m * rho + dt * synth) / (m + dt * (synth / th + degr))


def step_smc(mesh: Mesh, state: FieldState, params: TransportParams, dt: float,
             coords: np.ndarray | None = None,
             options: TransportOptions = TransportOptions(), ops: dict | None = None) -> np.ndarray:
    """``[M + dt K - dt Q] rho_S' = M rho_S`` (flux corrected)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ops = ops or assemble_operators(mesh, state, params, coords)
    stab = options.stabilization == "fct"
    b = _sources(mesh, options.smc_influx, coords)
    u = _advance(ops["M"], (ops["K"] - ops["Q"]).tocsr(), state.rho_S, dt, b, stab,
                 options.prelimit)
    return _accept(u, max(np.abs(state.rho_S).max(), 1e-300), "SMC", stab)


def transport_step(mesh: Mesh, state: FieldState, params: TransportParams, dt: float,
                   coords: np.ndarray | None = None,
                   options: TransportOptions = TransportOptions()) -> FieldState:
    """Advance PDGF, then ECM, then SMC; all coefficients from step ``n``."""
    ops = assemble_operators(mesh, state, params, coords)
    c = step_pdgf(mesh, state, params, dt, coords, options, ops)
    e = step_ecm(mesh, state, params, dt, coords)
    s = step_smc(mesh, state, params, dt, coords, options, ops)
    return FieldState(c, e, s, state.time + dt)


def total_amount(mesh: Mesh, nodal: np.ndarray, coords: np.ndarray | None = None) -> float:
    """``int phi dv`` of a nodal field (consistent integration)."""
    return float(_nodal_measure(mesh, coords) @ nodal)


__all__ = [
    "TransportParams", "FieldState", "TransportOptions", "TransportError",
    "element_matrices", "element_blocks", "assemble_operators", "boundary_load",
    "step_pdgf", "step_ecm", "step_smc", "transport_step", "total_amount",
]
