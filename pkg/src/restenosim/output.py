"""Legacy VTK snapshots and CSV probe / section files."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .coupling import CoupledState
from .mesh import Mesh, element_geometry, evaluate_at, locate_points

VTK_CELL_TYPE = {"tri": 5, "quad": 9}
FIELDS = ("c_P", "rho_E", "rho_S")


def fmt(value: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return f"{float(value):.16e}"


def write_vtk(path, mesh: Mesh, state: CoupledState, title: str = "restenosim") -> None:
    """Legacy ASCII (v3.0) unstructured grid on the reference configuration.

    Point data: ``c_P``, ``rho_E``, ``rho_S`` and the ``displacement``
    vector; cell data: Gauss-point averages of ``theta`` and ``J``.
    """
    x = mesh.node_coords
    lines = ["# vtk DataFile Version 3.0", f"{title} t={state.time!r}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_nodes} double"]
    lines += [f"{fmt(a)} {fmt(b)} 0" for a, b in x]
    nen = mesh.elements.shape[1]
    lines.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (nen + 1)}")
    lines += [f"{nen} " + " ".join(map(str, e)) for e in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(VTK_CELL_TYPE[mesh.etype])] * mesh.n_elements
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name in FIELDS:
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [fmt(v) for v in getattr(state.fields, name)]
    lines.append("VECTORS displacement double")
    lines += [f"{fmt(a)} {fmt(b)} 0" for a, b in state.u]
    lines.append(f"CELL_DATA {mesh.n_elements}")
    for name, gp in (("theta", state.growth.theta), ("J", state.growth.J_prev)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [fmt(v) for v in gp.mean(axis=1)]
    Path(path).write_text("\n".join(lines) + "\n")


class Sampler:
    """Evaluates nodal fields at fixed reference points.

    Points that coincide with a node return the nodal value itself.
    """

    def __init__(self, mesh: Mesh, points: np.ndarray):
        self.mesh = mesh
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.elements, self.local = locate_points(mesh, self.points)
        if (self.elements < 0).any():
            bad = self.points[self.elements < 0].tolist()
            raise ValueError(f"sample points outside the mesh: {bad}")
        d = np.linalg.norm(mesh.node_coords[None, :, :] - self.points[:, None, :], axis=2)
        scale = max(float(np.ptp(mesh.node_coords, axis=0).max()), 1.0)
        self.node = np.where(d.min(axis=1) <= 1e-12 * scale, d.argmin(axis=1), -1)
        xq = element_geometry(mesh).xq
        flat = xq.reshape(-1, 2)
        self.gauss = np.argmin(np.linalg.norm(flat[None, :, :] - self.points[:, None, :], axis=2),
                               axis=1)

    def nodal(self, values: np.ndarray) -> np.ndarray:
        out = evaluate_at(self.mesh, values, self.elements, self.local)
        hit = self.node >= 0
        out[hit] = values[self.node[hit]]
        return out

    def gauss_point(self, gp_values: np.ndarray) -> np.ndarray:
        return gp_values.reshape(-1)[self.gauss]


class ProbeWriter:
    """One CSV row per output time: fields at the probes, theta and J at the nearest Gauss point."""

    def __init__(self, path, mesh: Mesh, points: np.ndarray):
        self.sampler = Sampler(mesh, points)
        self.path = Path(path)
        self._fh = self.path.open("w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        header = ["time"]
        for k in range(len(self.sampler.points)):
            header += [f"p{k}_{name}" for name in FIELDS + ("theta", "J")]
        self._w.writerow(header)
        self.rows = 0

    def write(self, state: CoupledState) -> None:
        s = self.sampler
        cols = [s.nodal(getattr(state.fields, name)) for name in FIELDS]
        cols += [s.gauss_point(state.growth.theta), s.gauss_point(state.growth.J_prev)]
        row = [fmt(state.time)]
        for k in range(len(s.points)):
            row += [fmt(c[k]) for c in cols]
        self._w.writerow(row)
        self._fh.flush()
        self.rows += 1

    def close(self) -> None:
        self._fh.close()


class SectionWriter:
    """Long-format CSV of the fields along the section line: ``time, s, x, y, ...``."""

    def __init__(self, path, mesh: Mesh, points: np.ndarray):
        self.sampler = Sampler(mesh, points)
        pts = self.sampler.points
        self.s = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))]
        self.path = Path(path)
        self._fh = self.path.open("w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(["time", "s", "x0", "x1", *FIELDS])

    def write(self, state: CoupledState) -> None:
        cols = [self.sampler.nodal(getattr(state.fields, name)) for name in FIELDS]
        for k, p in enumerate(self.sampler.points):
            self._w.writerow([fmt(state.time), fmt(self.s[k]), fmt(p[0]), fmt(p[1]),
                              *(fmt(c[k]) for c in cols)])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_section(path) -> dict:
    """Load a section CSV as ``{time: {column: array}}``."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    out = {}
    for t in np.unique(data["time"]):
        rows = data[data["time"] == t]
        out[float(t)] = {name: np.asarray(rows[name]) for name in data.dtype.names[1:]}
    return out
