"""Run a configured simulation and write its outputs."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SimulationConfig, serialize
from .coupling import CoupledState, advance
from .output import ProbeWriter, Sampler, SectionWriter, write_vtk
from .scenario import (build_initial_state, build_mesh, build_problem, probe_points,
                       section_points)

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    state: CoupledState
    mesh: object
    snapshots: list          # output times
    out_dir: Path | None


def run(cfg: SimulationConfig, out_dir=None, mechanics: bool = True,
        callback=None) -> RunResult:
    """Advance the configured scenario to ``time.t_end``.

    With ``out_dir`` the resolved config, ``probes.csv``, ``section.csv`` and
    (if enabled) one VTK file per output time are written there. Output is
    flushed as it is produced, so a failed run leaves everything up to the
    last committed output time on disk.
    """
    mesh = build_mesh(cfg)
    problem = build_problem(cfg, mesh, mechanics=mechanics)
    state = CoupledState.initial(mesh, build_initial_state(cfg, mesh))
    dt = cfg.time.dt
    n_steps = int(round(cfg.time.t_end / dt))
    every = max(1, int(round(cfg.time.output_every / dt)))

    writers = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.cfg").write_text(serialize(cfg))
        writers = [ProbeWriter(out_dir / "probes.csv", mesh, probe_points(cfg, mesh)),
                   SectionWriter(out_dir / "section.csv", mesh, section_points(cfg, mesh))]
    times = []

    def emit(st):
        times.append(st.time)
        log.info("t = %.4f  theta in [%.5f, %.5f]", st.time, st.growth.theta.min(),
                 st.growth.theta.max())
        for w in writers:
            w.write(st)
        if out_dir is not None and cfg.output.vtk:
            write_vtk(out_dir / f"snapshot_{len(times) - 1:04d}.vtk", mesh, st)
        if callback is not None:
            callback(st)

    try:
        state = advance(problem, state, dt, n_steps, every=every, callback=emit)
    finally:
        for w in writers:
            w.close()
    state.fields.check(cfg.transport)
    if (state.growth.J_prev <= 0).any():
        raise AssertionError("non-positive volume ratio in the final state")
    if not np.allclose(state.coords, mesh.node_coords + state.u, rtol=0, atol=1e-12):
        raise AssertionError("current coordinates out of sync with displacements")
    return RunResult(state, mesh, times, out_dir)


@dataclass
class ConvergenceStudy:
    levels: list             # (nx, ny, dt) per level, coarsest first
    profiles: list           # normalized section rho_S per level
    differences: list        # RMS difference between successive levels

    @property
    def ratios(self) -> list:
        d = self.differences
        return [d[k + 1] / d[k] if d[k] > 0 else float("inf") for k in range(len(d) - 1)]

    @property
    def monotone(self) -> bool:
        return all(r < 1.0 for r in self.ratios)


def refinement_levels(cfg: SimulationConfig, n_levels: int) -> list:
    """Coarsen the configured mesh and step ``n_levels - 1`` times by halving.

    The configured discretization is the finest level.
    """
    if n_levels < 2:
        raise ValueError("a convergence study needs at least 2 levels")
    if cfg.mesh.file:
        raise ValueError("convergence studies need the structured mesh generator (mesh.file set)")
    f = 2 ** (n_levels - 1)
    nx, ny = cfg.mesh.nx, cfg.mesh.ny
    if nx % f or ny % f:
        raise ValueError(f"mesh {nx}x{ny} cannot be halved {n_levels - 1} times; "
                         f"use nx, ny divisible by {f}")
    return [(nx * 2 ** k // f, ny * 2 ** k // f, cfg.time.dt * f / 2 ** k) for k in range(n_levels)]


def convergence_study(cfg: SimulationConfig, levels, mechanics: bool = False) -> ConvergenceStudy:
    """Section SMC profiles at ``t_end`` on successively refined discretizations.

    Profiles are sampled at the same reference points on every level and
    normalized by ``rho_S_h``.
    """
    profiles = []
    for nx, ny, dt in levels:
        lvl = cfg.replace(mesh={"nx": nx, "ny": ny},
                          time={"dt": dt, "dt_min": min(cfg.time.dt_min, dt),
                                "output_every": cfg.time.t_end or dt})
        res = run(lvl, None, mechanics=mechanics)
        sampler = Sampler(res.mesh, section_points(lvl, res.mesh))
        profiles.append(sampler.nodal(res.state.fields.rho_S) / cfg.transport.rho_S_h)
        log.info("level %dx%d dt=%g done", nx, ny, dt)
    diffs = [float(np.sqrt(np.mean((profiles[k + 1] - profiles[k]) ** 2)))
             for k in range(len(profiles) - 1)]
    return ConvergenceStudy(list(levels), profiles, diffs)
