"""Build the mesh, initial fields and coupled problem described by a config."""
from __future__ import annotations

import warnings

import numpy as np

from .config import SimulationConfig
from .coupling import CoupledProblem
from .mesh import Mesh, load_mesh, structured_rectangle
from .transport import FieldState, TransportOptions

PEAK_FRACTIONS = (0.25, 0.5, 0.75)


def build_mesh(cfg: SimulationConfig) -> Mesh:
    m = cfg.mesh
    if m.file:
        mesh = load_mesh(m.file)
    else:
        mesh = structured_rectangle(m.length, m.thickness, m.nx, m.ny, m.mode,
                                    inner_radius=m.inner_radius if m.mode != "plane" else 0.0,
                                    etype=m.element)
    if mesh.etype == "tri" and m.tri_points != mesh.tri_points:
        mesh = Mesh(mesh.node_coords, mesh.elements, mesh.boundary_edges, mesh.boundary_tags,
                    mesh.mode, tri_points=m.tri_points)
    return mesh


def surface_points(mesh: Mesh, tag: str, fractions) -> np.ndarray:
    """Points on a tagged surface at fractions of its axial extent.

    The transverse coordinate is taken from the surface node nearest in the
    axial direction, so the points lie on the (straight) surface.
    """
    nodes = mesh.tagged_nodes(tag)
    if nodes.size == 0:
        raise ValueError(f"mesh has no boundary tagged {tag!r}")
    a = mesh.axial_axis
    x = mesh.node_coords[nodes]
    lo, hi = x[:, a].min(), x[:, a].max()
    out = np.empty((len(fractions), 2))
    for k, f in enumerate(fractions):
        s = lo + f * (hi - lo)
        near = x[np.argmin(np.abs(x[:, a] - s))]
        out[k, a] = s
        out[k, 1 - a] = near[1 - a]
    return out


def peak_centers(cfg: SimulationConfig, mesh: Mesh) -> np.ndarray:
    if cfg.initial.centers is not None:
        return np.asarray(cfg.initial.centers, dtype=float).reshape(-1, 2)
    return surface_points(mesh, "inner", PEAK_FRACTIONS)


def probe_points(cfg: SimulationConfig, mesh: Mesh) -> np.ndarray:
    """Configured probes, or the middle peak centre and the point midway to the first."""
    if cfg.output.probes is not None:
        return np.asarray(cfg.output.probes, dtype=float).reshape(-1, 2)
    c = peak_centers(cfg, mesh)
    if len(c) == 0:
        return surface_points(mesh, "inner", (0.5,))
    mid = c[len(c) // 2]
    if len(c) < 2:
        return mid[None, :]
    return np.vstack([mid, 0.5 * (c[0] + c[1])])


def section_points(cfg: SimulationConfig, mesh: Mesh) -> np.ndarray:
    """Sampling points of the section line along the configured surface."""
    n = cfg.output.section_points
    return surface_points(mesh, cfg.output.section_tag, np.linspace(0.0, 1.0, n))


def gaussian_peaks(x: np.ndarray, centers, sigma, amplitude) -> np.ndarray:
    """``sum_k A_k exp(-|x - x_k|^2 / (2 sigma_k^2))`` at points ``x``."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (len(centers),))
    amplitude = np.broadcast_to(np.asarray(amplitude, dtype=float), (len(centers),))
    c = np.zeros(len(x))
    for xc, s, a in zip(centers, sigma, amplitude):
        c += a * np.exp(-np.sum((x - xc) ** 2, axis=1) / (2.0 * s * s))
    return c


def build_initial_state(cfg: SimulationConfig, mesh: Mesh) -> FieldState:
    """Gaussian PDGF peaks on uniform healthy ECM and SMC densities."""
    x = mesh.node_coords
    centers = peak_centers(cfg, mesh)
    lo, hi = x.min(axis=0), x.max(axis=0)
    outside = ((centers < lo - 1e-12) | (centers > hi + 1e-12)).any(axis=1)
    if outside.any():
        warnings.warn(f"PDGF peak centres outside the mesh bounding box: {centers[outside].tolist()}",
                      stacklevel=2)
    c_P = gaussian_peaks(x, centers, cfg.initial.sigma, cfg.initial.amplitude)
    n = mesh.n_nodes
    return FieldState(c_P, np.full(n, cfg.initial.rho_E0), np.full(n, cfg.initial.rho_S0), 0.0)


def build_problem(cfg: SimulationConfig, mesh: Mesh, mechanics: bool = True) -> CoupledProblem:
    for section in ("bc", "pdgf_flux", "smc_flux"):
        for tag in getattr(cfg, section):
            if tag not in mesh.tags:
                raise ValueError(f"{section}.{tag}: mesh has no boundary tagged {tag!r}")
    st = cfg.stabilization
    options = TransportOptions(stabilization=st.method, prelimit=st.prelimit, fct_pdgf=st.pdgf,
                               pdgf_influx=tuple(cfg.pdgf_flux.items()),
                               smc_influx=tuple(cfg.smc_flux.items()))
    return CoupledProblem(mesh, transport=cfg.transport, material=cfg.material, options=options,
                          bc=dict(cfg.bc), growth_dim=cfg.growth.dimension or None,
                          dt_min=cfg.time.dt_min, mechanics=mechanics,
                          newton_max_iters=cfg.newton.max_iters,
                          newton_atol=cfg.newton.atol, newton_rtol=cfg.newton.rtol)
