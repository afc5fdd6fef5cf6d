"""Staggered transport and growth coupling.

Each step advances the transport fields on the current configuration, hands
the SMC density to the growth law, solves the equilibrium problem and then
rescales the transport densities by the local volume change ``J_prev / J``
so that the amount carried by each Gauss point is unchanged by the
configuration update.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import constitutive as cm
from . import mechanics as mech
from .mesh import Mesh, element_geometry
from .numerics import SolverError, assemble_vector
from .transport import FieldState, TransportOptions, TransportParams, transport_step

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """A coupled step could not be completed even at the minimum time step."""


@dataclass(frozen=True)
class CoupledState:
    """Committed state after an accepted coupled step."""

    fields: FieldState
    growth: mech.GrowthState
    u: np.ndarray        # (n_nodes, 2)
    coords: np.ndarray   # reference + u
    step: int = 0

    @property
    def time(self) -> float:
        return self.fields.time

    @property
    def J(self) -> np.ndarray:
        """Volume ratio at the Gauss points (committed ``J_prev``)."""
        return self.growth.J_prev

    @classmethod
    def initial(cls, mesh: Mesh, fields: FieldState) -> "CoupledState":
        u = np.zeros_like(mesh.node_coords)
        return cls(fields, mech.GrowthState.initial(mesh), u, mesh.node_coords.copy(), 0)


def gp_to_node_extrapolate(mesh: Mesh, gp_values: np.ndarray,
                           coords: np.ndarray | None = None) -> np.ndarray:
    """Gauss-point values (ne, nq) to nodal values.

    Each element fits its shape-function expansion to its Gauss-point values
    by least squares (exact inversion when ``nq == nen``); shared nodes then
    take the volume-weighted mean of the element corner values.
    """
    gp_values = np.asarray(gp_values, dtype=float)
    geo = element_geometry(mesh, coords)
    if gp_values.shape != geo.dV.shape:
        raise ValueError(f"expected Gauss-point array of shape {geo.dV.shape}")
    corner = gp_values @ np.linalg.pinv(geo.N).T
    vol = geo.dV.sum(axis=1)
    num = assemble_vector(mesh.n_nodes, mesh.elements, vol[:, None] * corner)
    den = assemble_vector(mesh.n_nodes, mesh.elements,
                          np.broadcast_to(vol[:, None], corner.shape))
    return num / den


@dataclass
class CoupledProblem:
    """Everything needed to advance a :class:`CoupledState`.

    ``bc`` maps boundary tags to ``fixed | fix_0 | fix_1 | free``;
    ``traction`` maps tags to dead-load tractions. With ``mechanics=False``
    only the transport fields evolve (the configuration stays fixed).
    """

    mesh: Mesh
    transport: TransportParams = field(default_factory=TransportParams)
    material: cm.MaterialParams = field(default_factory=cm.MaterialParams)
    options: TransportOptions = field(default_factory=TransportOptions)
    bc: dict = field(default_factory=lambda: {"left": "fixed", "right": "fixed"})
    traction: dict = field(default_factory=dict)
    growth_dim: int | None = None
    dt_min: float = 1e-5
    mechanics: bool = True
    newton_max_iters: int = 25
    newton_atol: float = 1e-10
    newton_rtol: float = 1e-8

    def __post_init__(self):
        if self.growth_dim is None:
            self.growth_dim = 3 if self.mesh.axisymmetric else 2
        if self.growth_dim not in (2, 3):
            raise ValueError("growth dimension must be 2 or 3")
        self._disc = mech.Discretization(self.mesh) if self.mechanics else None
        self._fixed = mech.fixed_dofs(self.mesh, self.bc)
        self._H = cm.structure_tensors(self.material, self.mesh.axial_axis)

    def gauss_values(self, nodal: np.ndarray) -> np.ndarray:
        return np.einsum("qa,ea->eq", self._disc.geo.N, nodal[self.mesh.elements])

    def attempt(self, state: CoupledState, dt: float) -> CoupledState:
        """One staggered step without step-size control."""
        mesh = self.mesh
        fields = transport_step(mesh, state.fields, self.transport, dt,
                                coords=state.coords, options=self.options)
        fields.check(self.transport)
        if not self.mechanics:
            return CoupledState(fields, state.growth, state.u, state.coords, state.step + 1)

        g = state.growth
        rho_S = self.gauss_values(fields.rho_S)
        law = mech.GrowthLaw(g.theta_prev, g.J_prev, rho_S, self.transport.rho_S_h,
                             self.growth_dim)
        res = mech.newton_solve(mesh, self.material, law, self._fixed, self.traction,
                                u0=state.u, growth_dim=self.growth_dim,
                                max_iters=self.newton_max_iters, atol=self.newton_atol,
                                rtol=self.newton_rtol, disc=self._disc, H=self._H)
        coords = mesh.node_coords + res.u
        # the Gauss-point scaling J_prev / J is carried to the nodes as a factor,
        # which keeps every density non-negative
        scale = gp_to_node_extrapolate(mesh, g.J_prev / res.J, coords)
        if np.any(scale <= 0):
            raise cm.StepRejected("volume change too large for the pushback")
        # compression cannot push the matrix past its saturation density
        rho_E = np.minimum(scale * fields.rho_E, self.transport.rho_E_th)
        fields = FieldState(scale * fields.c_P, rho_E, scale * fields.rho_S, fields.time)
        growth = mech.GrowthState(res.theta, res.theta, res.J)
        return CoupledState(fields, growth, res.u, coords, state.step + 1)

    def step(self, state: CoupledState, dt: float) -> CoupledState:
        """Advance by ``dt``, halving the step on mechanical failure.

        A failed attempt leaves ``state`` untouched; the interval is then
        covered by two half steps, recursively down to ``dt_min``.
        """
        try:
            return self.attempt(state, dt)
        except (mech.NewtonError, cm.StepRejected, SolverError) as exc:
            half = 0.5 * dt
            if half < self.dt_min:
                raise StepFailure(f"step at t = {state.time:.6g} failed with dt = {dt:.3e} "
                                  f"(minimum {self.dt_min:.3e}): {exc}") from exc
            log.info("t = %.6g: %s; retrying with dt = %.3e", state.time, exc, half)
            mid = self.step(state, half)
            return self.step(mid, half)


def staggered_step(problem: CoupledProblem, state: CoupledState, dt: float) -> CoupledState:
    """Transport, growth, equilibrium, pushback and commit for one time step."""
    return problem.step(state, dt)


def advance(problem: CoupledProblem, state: CoupledState, dt: float, n_steps: int,
            every: int = 1, callback=None) -> CoupledState:
    """Take ``n_steps`` steps of size ``dt``, calling ``callback(state)`` every ``every`` steps.

    Time is recomputed as ``k * dt`` after each step so that output times
    carry no accumulated round-off.
    """
    t0 = state.time
    if callback is not None:
        callback(state)
    for k in range(1, n_steps + 1):
        state = problem.step(state, dt)
        state = replace(state, fields=replace(state.fields, time=t0 + k * dt), step=k)
        if callback is not None and k % every == 0:
            callback(state)
    return state


__all__ = [
    "CoupledState", "CoupledProblem", "StepFailure",
    "gp_to_node_extrapolate", "staggered_step", "advance",
]
