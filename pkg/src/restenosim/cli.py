"""Command-line interface.

Exit status: 0 on success, 1 for invalid input (config, mesh, arguments),
2 when a solver fails.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import constitutive as cm
from .config import ConfigError, SimulationConfig, parse_config
from .coupling import StepFailure
from .driver import convergence_study, refinement_levels, run
from .fct import LimiterError
from .mechanics import NewtonError
from .mesh import MeshError
from .numerics import SolverError
from .output import fmt, read_section
from .transport import TransportError

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2
SOLVER_ERRORS = (StepFailure, NewtonError, SolverError, TransportError, LimiterError,
                 cm.StepRejected)
INPUT_ERRORS = (ConfigError, MeshError, ValueError, OSError)


def load_config(args) -> SimulationConfig:
    cfg = parse_config(args.config) if args.config else SimulationConfig()
    time, mesh = {}, {}
    if args.t_end is not None:
        time["t_end"] = args.t_end
    if args.dt is not None:
        time["dt"] = args.dt
        time["dt_min"] = min(cfg.time.dt_min, args.dt)
    if args.mesh is not None:
        mesh["file"] = str(args.mesh)
    if time.get("t_end") is not None and time["t_end"] > 0:
        # keep the output cadence a multiple of dt and no longer than the run
        dt = time.get("dt", cfg.time.dt)
        every = min(cfg.time.output_every, time["t_end"])
        time["output_every"] = max(dt, round(every / dt) * dt)
    return cfg.replace(time=time, mesh=mesh) if (time or mesh) else cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args, mechanics=True) -> int:
    cfg = load_config(args)
    res = run(cfg, _out_dir(args), mechanics=mechanics)
    th = res.state.growth.theta
    print(f"t = {res.state.time:g} day, {len(res.snapshots)} outputs in {res.out_dir}")
    print(f"theta in [{th.min():.6f}, {th.max():.6f}], "
          f"max c_P = {res.state.fields.c_P.max():.4e}")
    return EXIT_OK


def read_f_history(path) -> list:
    """Rows of ``F`` (4 or 9 entries, row-major) followed by ``theta``."""
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].replace(",", " ").split()
        if not line:
            continue
        try:
            vals = [float(v) for v in line]
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric entry") from None
        if len(vals) == 5:
            F = np.eye(3)
            F[:2, :2] = np.reshape(vals[:4], (2, 2))
        elif len(vals) == 10:
            F = np.reshape(vals[:9], (3, 3))
        else:
            raise ValueError(f"{path}:{lineno}: expected 4 or 9 entries of F plus theta")
        if not vals[-1] > 0:
            raise ValueError(f"{path}:{lineno}: theta must be > 0")
        rows.append((F, vals[-1]))
    return rows


def fd_errors(F, theta, H, mat, growth_dim, h=1e-6):
    """Relative errors of ``P`` against FD of ``psi`` and ``dP/dF`` against FD of ``P``."""
    P, A, _ = cm.stress_and_tangents(F, theta, H, mat, growth_dim)
    step = h * np.linalg.norm(F)
    Pfd = np.zeros((3, 3))
    Afd = np.zeros((3, 3, 3, 3))
    for k in range(3):
        for L in range(3):
            E = np.zeros((3, 3))
            E[k, L] = step
            Pfd[k, L] = (cm.free_energy(F + E, theta, H, mat, growth_dim)
                         - cm.free_energy(F - E, theta, H, mat, growth_dim)) / (2 * step)
            Afd[:, :, k, L] = (cm.pk1_stress(F + E, theta, H, mat, growth_dim)
                               - cm.pk1_stress(F - E, theta, H, mat, growth_dim)) / (2 * step)
    err_P = np.linalg.norm(P - Pfd) / max(np.linalg.norm(P), 1e-12)
    err_A = np.linalg.norm(A - Afd) / np.linalg.norm(A)
    return cm.free_energy(F, theta, H, mat, growth_dim), P, err_P, err_A


def cmd_material_test(args) -> int:
    cfg = load_config(args)
    if not args.f_history:
        raise ValueError("material-test needs --f-history")
    axisym = cfg.mesh.mode != "plane"
    growth_dim = cfg.growth.dimension or (3 if axisym else 2)
    H = cm.structure_tensors(cfg.material, axial_axis=1 if axisym else 0)
    out = _out_dir(args) / "material_test.csv"
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "theta", "psi", *(f"P{i}{j}" for i in range(1, 4) for j in range(1, 4)),
                    "err_P", "err_A"])
        for k, (F, theta) in enumerate(read_f_history(args.f_history)):
            psi, P, eP, eA = fd_errors(F, theta, H, cfg.material, growth_dim)
            w.writerow([k, fmt(theta), fmt(psi), *(fmt(v) for v in P.ravel()), fmt(eP), fmt(eA)])
    print(f"wrote {out}")
    return EXIT_OK


def cmd_convergence(args) -> int:
    cfg = load_config(args)
    levels = refinement_levels(cfg, args.levels)
    study = convergence_study(cfg, levels, mechanics=args.coupled)
    out = _out_dir(args) / "convergence.csv"
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "nx", "ny", "dt", "diff_to_previous", "ratio"])
        ratios = [float("nan")] + study.ratios
        print(f"{'level':>5} {'mesh':>9} {'dt':>10} {'RMS diff':>12} {'ratio':>8}")
        for k, (nx, ny, dt) in enumerate(levels):
            d = study.differences[k - 1] if k else float("nan")
            r = ratios[k - 1] if k > 1 else float("nan")
            w.writerow([k, nx, ny, fmt(dt), fmt(d), fmt(r)])
            print(f"{k:>5} {f'{nx}x{ny}':>9} {dt:>10.4g} {d:>12.4e} {r:>8.3f}")
    print("monotone" if study.monotone else "NOT monotone", f"- table in {out}")
    return EXIT_OK


def cmd_section_plot(args) -> int:
    src = Path(args.out) / "section.csv"
    if not src.exists():
        raise ValueError(f"{src} not found; run 'run' or 'transport-only' with this --out first")
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise ValueError("section-plot needs matplotlib (pip install matplotlib)") from None
    cfg = load_config(args)
    data = read_section(src)
    fig, ax = plt.subplots(figsize=(7, 4))
    for t, cols in data.items():
        ax.plot(cols["s"], cols["rho_S"] / cfg.transport.rho_S_h, label=f"t = {t:g} d")
    ax.set_xlabel("position along section (mm)")
    ax.set_ylabel(r"$\rho_S / \rho_{S,h}$")
    ax.legend(fontsize="small")
    fig.tight_layout()
    png = Path(args.out) / "section.png"
    fig.savefig(png, dpi=120)
    print(f"wrote {png}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="restenosim",
                                description="Coupled transport and growth simulation of a stented artery wall.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="configuration file (defaults if omitted)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--t-end", type=float, dest="t_end")
        sp.add_argument("--dt", type=float)
        sp.add_argument("--mesh", type=Path, help="mesh file overriding the generator")
        return sp

    common(sub.add_parser("run", help="coupled transport and growth run"))
    common(sub.add_parser("transport-only", help="transport on the fixed reference configuration"))
    mt = common(sub.add_parser("material-test", help="material point check against finite differences"))
    mt.add_argument("--f-history", type=Path, dest="f_history")
    cv = common(sub.add_parser("convergence", help="section profile under mesh and step halving"))
    cv.add_argument("--levels", type=int, default=3)
    cv.add_argument("--coupled", action="store_true", help="include mechanics in every level")
    common(sub.add_parser("section-plot", help="plot section.csv from a previous run"))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "run": cmd_run,
        "transport-only": lambda a: cmd_run(a, mechanics=False),
        "material-test": cmd_material_test,
        "convergence": cmd_convergence,
        "section-plot": cmd_section_plot,
    }
    try:
        return handlers[args.command](args)
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
