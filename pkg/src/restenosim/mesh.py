"""Linear 2D meshes: geometry, shape functions, quadrature and point location.

Two element families are supported, 3-node triangles and 4-node bilinear
quadrilaterals. A mesh holds a single element family. Meshes are either
plane (Cartesian ``x, y``) or axisymmetric (``r, z`` with ``r >= 0``); in the
axisymmetric case every integration weight carries the ``2*pi*r`` factor of
the revolved volume.

Example
-------
>>> m = structured_rectangle(2.0, 1.0, 2, 1, "plane")
>>> geo = element_geometry(m)
>>> float(geo.dV.sum())
2.0
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PLANE = "plane"
AXISYMMETRIC = "axisymmetric"
_MODE_ALIASES = {"plane": PLANE, "axisym": AXISYMMETRIC, "axisymmetric": AXISYMMETRIC}

# local edges, counter-clockwise
_EDGES = {
    "tri": ((0, 1), (1, 2), (2, 0)),
    "quad": ((0, 1), (1, 2), (2, 3), (3, 0)),
}


class MeshError(ValueError):
    """Raised for malformed or invalid meshes."""


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray


def quadrature(etype: str, npoints: int | None = None) -> QuadratureRule:
    """Gauss rule for the reference element.

    Quads use 2x2 Gauss on the bi-unit square (weights sum to 4). Triangles
    use the 3-point edge-interior rule by default or the 1-point centroid rule
    on the unit triangle (weights sum to 1/2).
    """
    if etype == "quad":
        g = 1.0 / np.sqrt(3.0)
        pts = np.array([[-g, -g], [g, -g], [g, g], [-g, g]])
        return QuadratureRule(pts, np.ones(4))
    if etype == "tri":
        if npoints in (None, 3):
            pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
            return QuadratureRule(pts, np.full(3, 1 / 6))
        if npoints == 1:
            return QuadratureRule(np.array([[1 / 3, 1 / 3]]), np.array([0.5]))
    raise MeshError(f"no quadrature rule for {etype!r} with {npoints} points")


def shape_functions(etype: str, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference shape functions and their local derivatives.

    Parameters
    ----------
    etype : {"tri", "quad"}
    xi : (..., 2) array of local coordinates

    Returns
    -------
    N : (..., nen)
    dN : (..., nen, 2) derivatives with respect to the local coordinates
    """
    xi = np.asarray(xi, dtype=float)
    s, t = xi[..., 0], xi[..., 1]
    if etype == "quad":
        N = 0.25 * np.stack([(1 - s) * (1 - t), (1 + s) * (1 - t),
                             (1 + s) * (1 + t), (1 - s) * (1 + t)], axis=-1)
        dNs = 0.25 * np.stack([-(1 - t), (1 - t), (1 + t), -(1 + t)], axis=-1)
        dNt = 0.25 * np.stack([-(1 - s), -(1 + s), (1 + s), (1 - s)], axis=-1)
        return N, np.stack([dNs, dNt], axis=-1)
    if etype == "tri":
        N = np.stack([1 - s - t, s, t], axis=-1)
        dN = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]),
                             xi.shape[:-1] + (3, 2))
        return N, dN.copy()
    raise MeshError(f"unknown element type {etype!r}")


@dataclass(frozen=True)
class Mesh:
    """Immutable linear finite element mesh.

    ``boundary_edges`` rows are ``(element, local_edge)``; ``boundary_tags``
    holds the matching tag strings.
    """

    node_coords: np.ndarray
    elements: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple[str, ...]
    mode: str = PLANE
    tri_points: int = 3
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "mode", _MODE_ALIASES.get(self.mode, self.mode))
        nodes = np.ascontiguousarray(self.node_coords, dtype=float)
        elems = np.ascontiguousarray(self.elements, dtype=np.int64)
        edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        nodes.setflags(write=False)
        elems.setflags(write=False)
        edges.setflags(write=False)
        object.__setattr__(self, "node_coords", nodes)
        object.__setattr__(self, "elements", elems)
        object.__setattr__(self, "boundary_edges", edges)
        object.__setattr__(self, "boundary_tags", tuple(self.boundary_tags))
        validate(self)

    @property
    def etype(self) -> str:
        return "tri" if self.elements.shape[1] == 3 else "quad"

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def axisymmetric(self) -> bool:
        return self.mode == AXISYMMETRIC

    @property
    def rule(self) -> QuadratureRule:
        return quadrature(self.etype, self.tri_points if self.etype == "tri" else None)

    @property
    def n_qp(self) -> int:
        return len(self.rule.weights)

    @property
    def axial_axis(self) -> int:
        """Coordinate index running along the vessel axis."""
        return 1 if self.axisymmetric else 0

    def edge_nodes(self, tag: str | None = None) -> np.ndarray:
        """Node pairs of boundary edges, optionally restricted to one tag."""
        local = np.array(_EDGES[self.etype])
        rows = [k for k, t in enumerate(self.boundary_tags) if tag is None or t == tag]
        e, le = self.boundary_edges[rows, 0], self.boundary_edges[rows, 1]
        return self.elements[e[:, None], local[le]]

    def tagged_nodes(self, tag: str) -> np.ndarray:
        return np.unique(self.edge_nodes(tag))

    @property
    def tags(self) -> list[str]:
        return sorted(set(self.boundary_tags))


def validate(mesh: Mesh) -> None:
    nodes, elems = mesh.node_coords, mesh.elements
    if mesh.mode not in (PLANE, AXISYMMETRIC):
        raise MeshError(f"unknown mode {mesh.mode!r}")
    if nodes.ndim != 2 or nodes.shape[1] != 2:
        raise MeshError("node_coords must have shape (n, 2)")
    if elems.ndim != 2 or elems.shape[1] not in (3, 4):
        raise MeshError("elements must have 3 or 4 nodes each")
    bad = np.flatnonzero(((elems < 0) | (elems >= len(nodes))).any(axis=1))
    if bad.size:
        raise MeshError(f"element {bad[0]} references a node index out of bounds "
                        f"(mesh has {len(nodes)} nodes)")
    if len(mesh.boundary_edges) != len(mesh.boundary_tags):
        raise MeshError("boundary_edges and boundary_tags differ in length")
    if mesh.boundary_edges.size:
        e, le = mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1]
        if ((e < 0) | (e >= len(elems))).any():
            raise MeshError("boundary edge references an element out of bounds")
        if ((le < 0) | (le >= elems.shape[1])).any():
            raise MeshError("boundary edge local index out of range")
    if mesh.axisymmetric and (nodes[:, 0] < 0).any():
        raise MeshError("axisymmetric mesh has negative radial coordinates")
    detJ = reference_jacobians(mesh)
    inverted = np.flatnonzero((detJ <= 0).any(axis=1))
    if inverted.size:
        raise MeshError(f"inverted or degenerate element {inverted[0]} "
                        f"(detJ = {detJ[inverted[0]].min():.3e})")


def reference_jacobians(mesh: Mesh, coords: np.ndarray | None = None) -> np.ndarray:
    """Jacobian determinants, shape (n_elements, n_qp)."""
    x = mesh.node_coords if coords is None else coords
    _, dN = shape_functions(mesh.etype, mesh.rule.points)
    xe = x[mesh.elements]
    J = np.einsum("eai,qaj->eqij", xe, dN)
    return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]


@dataclass(frozen=True)
class ShapeEval:
    """Shape data at one point of one element."""

    N: np.ndarray
    dN_dx: np.ndarray
    detJ_times_w: float


def shape_eval(mesh: Mesh, element: int, qp, weight: float = 1.0,
               current_coords: np.ndarray | None = None) -> ShapeEval:
    """Evaluate shapes at local point ``qp`` of ``element``.

    ``weight`` is the quadrature weight; in axisymmetric mode the returned
    measure includes ``2*pi*r`` at the point. Gradients and measure refer to
    ``current_coords`` when given, else to the reference coordinates.
    """
    x = mesh.node_coords if current_coords is None else np.asarray(current_coords)
    xe = x[mesh.elements[element]]
    N, dN = shape_functions(mesh.etype, np.asarray(qp, dtype=float))
    J = xe.T @ dN
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if det <= 0:
        raise MeshError(f"singular or inverted Jacobian in element {element} "
                        f"(detJ = {det:.3e})")
    dN_dx = dN @ np.linalg.inv(J)
    dv = det * weight
    if mesh.axisymmetric:
        dv *= 2.0 * np.pi * float(N @ xe[:, 0])
    return ShapeEval(N, dN_dx, dv)


@dataclass(frozen=True)
class Geometry:
    """Vectorized shape data for every element and quadrature point.

    Attributes
    ----------
    N : (nq, nen) shape values
    dN_dx : (ne, nq, nen, 2) spatial gradients
    dV : (ne, nq) integration measure incl. Jacobian, weight and 2*pi*r
    xq : (ne, nq, 2) quadrature point coordinates
    """

    N: np.ndarray
    dN_dx: np.ndarray
    dV: np.ndarray
    xq: np.ndarray
    detJ: np.ndarray

    def interpolate(self, mesh: Mesh, nodal: np.ndarray) -> np.ndarray:
        """Nodal scalar field -> values at quadrature points (ne, nq)."""
        return np.einsum("qa,ea->eq", self.N, nodal[mesh.elements])

    def gradient(self, mesh: Mesh, nodal: np.ndarray) -> np.ndarray:
        """Nodal scalar field -> gradient at quadrature points (ne, nq, 2)."""
        return np.einsum("eqai,ea->eqi", self.dN_dx, nodal[mesh.elements])


def element_geometry(mesh: Mesh, coords: np.ndarray | None = None) -> Geometry:
    """Shape data on the reference (default) or a current configuration."""
    x = mesh.node_coords if coords is None else np.asarray(coords, dtype=float)
    rule = mesh.rule
    N, dN = shape_functions(mesh.etype, rule.points)
    xe = x[mesh.elements]
    J = np.einsum("eai,qaj->eqij", xe, dN)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if (det <= 0).any():
        e = int(np.flatnonzero((det <= 0).any(axis=1))[0])
        raise MeshError(f"singular or inverted Jacobian in element {e} "
                        f"(detJ = {det[e].min():.3e})")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    dN_dx = np.einsum("qak,eqkj->eqaj", dN, inv)
    xq = np.einsum("qa,eai->eqi", N, xe)
    dV = det * rule.weights
    if mesh.axisymmetric:
        dV = dV * 2.0 * np.pi * xq[..., 0]
    return Geometry(N, dN_dx, dV, xq, det)


def structured_rectangle(length_mm: float, thickness_mm: float, nx: int, ny: int,
                         mode: str = PLANE, inner_radius: float = 0.0,
                         etype: str = "quad") -> Mesh:
    """Structured mesh of a wall strip.

    ``nx`` elements run along the length, ``ny`` through the thickness. In
    plane mode the length lies along ``x`` and the wall spans
    ``0 <= y <= thickness``. In axisymmetric mode the wall spans
    ``inner_radius <= r <= inner_radius + thickness`` and the length lies
    along ``z``. Boundary tags: ``inner`` (lumen side), ``outer``, ``left``
    (axial start) and ``right`` (axial end). ``etype="tri"`` splits each
    cell into two triangles.
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be >= 1")
    if length_mm <= 0 or thickness_mm <= 0 or inner_radius < 0:
        raise MeshError("dimensions must be positive")
    mode = _MODE_ALIASES.get(mode, mode)
    s = np.linspace(0.0, length_mm, nx + 1)
    t = np.linspace(0.0, thickness_mm, ny + 1)
    S, T = np.meshgrid(s, t, indexing="xy")  # (ny+1, nx+1)
    if mode == AXISYMMETRIC:
        coords = np.column_stack([inner_radius + T.ravel(), S.ravel()])
    else:
        coords = np.column_stack([S.ravel(), T.ravel() + inner_radius])

    def nid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    n0, n1, n2, n3 = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
    # counter-clockwise in (x, y) for plane, in (r, z) for axisymmetric
    if mode == AXISYMMETRIC:
        n1, n3 = n3, n1
    quads = np.column_stack([n0, n1, n2, n3])
    cell_i, cell_j = i, j

    # quad local edge -> (side along which the edge lies)
    if mode == AXISYMMETRIC:
        side_of_edge = {0: "s_low", 1: "t_high", 2: "s_high", 3: "t_low"}
    else:
        side_of_edge = {0: "t_low", 1: "s_high", 2: "t_high", 3: "s_low"}
    tag_of_side = {"t_low": "inner", "t_high": "outer", "s_low": "left", "s_high": "right"}

    edges, tags = [], []
    if etype == "quad":
        elements = quads
        for e in range(len(quads)):
            for le, side in side_of_edge.items():
                if _on_side(side, cell_i[e], cell_j[e], nx, ny):
                    edges.append((e, le))
                    tags.append(tag_of_side[side])
    elif etype == "tri":
        # split along local diagonal 0-2: (0,1,2) and (0,2,3)
        tris = np.empty((2 * len(quads), 3), dtype=np.int64)
        tris[0::2] = quads[:, [0, 1, 2]]
        tris[1::2] = quads[:, [0, 2, 3]]
        elements = tris
        # quad edge 0 -> tri A edge 0; quad edge 1 -> tri A edge 1;
        # quad edge 2 -> tri B edge 1; quad edge 3 -> tri B edge 2
        tri_edge = {0: (0, 0), 1: (0, 1), 2: (1, 1), 3: (1, 2)}
        for e in range(len(quads)):
            for le, side in side_of_edge.items():
                if _on_side(side, cell_i[e], cell_j[e], nx, ny):
                    off, tle = tri_edge[le]
                    edges.append((2 * e + off, tle))
                    tags.append(tag_of_side[side])
    else:
        raise MeshError(f"unknown element type {etype!r}")
    return Mesh(coords, elements, np.array(edges, dtype=np.int64).reshape(-1, 2),
                tuple(tags), mode)


def _on_side(side, i, j, nx, ny):
    return {"t_low": j == 0, "t_high": j == ny - 1,
            "s_low": i == 0, "s_high": i == nx - 1}[side]


def load_mesh(path) -> Mesh:
    """Read the plain-text mesh format.

    ::

        mode plane|axisym
        nodes <count>
        x y
        ...
        elements <count>
        quad i j k l        (or: tri i j k; 0-based, counter-clockwise)
        ...
        boundary <count>
        <element> <local-edge> <tag>

    Blank lines and ``#`` comments are ignored.
    """
    lines = []
    for no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            lines.append((no, text.split()))
    it = iter(lines)

    def expect(keyword):
        try:
            no, tok = next(it)
        except StopIteration:
            raise MeshError(f"{path}: unexpected end of file, expected {keyword!r}")
        if tok[0] != keyword or len(tok) != 2:
            raise MeshError(f"{path}:{no}: expected '{keyword} <value>'")
        return no, tok[1]

    def take(count, width, what):
        rows = []
        for _ in range(count):
            try:
                no, tok = next(it)
            except StopIteration:
                raise MeshError(f"{path}: unexpected end of file in {what} block")
            if len(tok) != width:
                raise MeshError(f"{path}:{no}: malformed {what} line")
            rows.append((no, tok))
        return rows

    no, mode = expect("mode")
    if mode not in _MODE_ALIASES:
        raise MeshError(f"{path}:{no}: unknown mode {mode!r}")
    no, n = expect("nodes")
    coords = []
    for no, tok in take(int(n), 2, "node"):
        try:
            coords.append([float(v) for v in tok])
        except ValueError:
            raise MeshError(f"{path}:{no}: bad node coordinate {' '.join(tok)!r}")
    no, n = expect("elements")
    n = int(n)
    elems, etypes = [], set()
    for _ in range(n):
        try:
            no, tok = next(it)
        except StopIteration:
            raise MeshError(f"{path}: unexpected end of file in element block")
        width = {"tri": 4, "quad": 5}.get(tok[0])
        if width is None or len(tok) != width:
            raise MeshError(f"{path}:{no}: malformed element line")
        try:
            elems.append([int(v) for v in tok[1:]])
        except ValueError:
            raise MeshError(f"{path}:{no}: non-integer node index")
        etypes.add(tok[0])
    if len(etypes) > 1:
        raise MeshError(f"{path}: mixed element types are not supported")
    edges, tags = [], []
    try:
        no, tok = next(it)
    except StopIteration:
        tok = None
    if tok is not None:
        if tok[0] != "boundary" or len(tok) != 2:
            raise MeshError(f"{path}:{no}: expected 'boundary <count>'")
        for no, tok in take(int(tok[1]), 3, "boundary"):
            try:
                edges.append((int(tok[0]), int(tok[1])))
            except ValueError:
                raise MeshError(f"{path}:{no}: malformed boundary line")
            tags.append(tok[2])
        extra = next(it, None)
        if extra is not None:
            raise MeshError(f"{path}:{extra[0]}: unexpected trailing content")
    return Mesh(np.array(coords, dtype=float).reshape(-1, 2),
                np.array(elems, dtype=np.int64).reshape(len(elems), -1),
                np.array(edges, dtype=np.int64).reshape(-1, 2), tuple(tags),
                _MODE_ALIASES[mode])


def save_mesh(mesh: Mesh, path) -> None:
    mode = "axisym" if mesh.axisymmetric else "plane"
    out = [f"mode {mode}", f"nodes {mesh.n_nodes}"]
    out += [f"{x:.17g} {y:.17g}" for x, y in mesh.node_coords]
    out.append(f"elements {mesh.n_elements}")
    out += [f"{mesh.etype} " + " ".join(map(str, e)) for e in mesh.elements]
    out.append(f"boundary {len(mesh.boundary_tags)}")
    out += [f"{e} {le} {t}" for (e, le), t in zip(mesh.boundary_edges, mesh.boundary_tags)]
    Path(path).write_text("\n".join(out) + "\n")


def locate_points(mesh: Mesh, points: np.ndarray, coords: np.ndarray | None = None,
                  tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Find containing element and local coordinates for each point.

    Returns ``(element_index, local_coords)``; points outside the mesh get
    element index -1.
    """
    x = mesh.node_coords if coords is None else coords
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xe = x[mesh.elements]
    lo, hi = xe.min(axis=1), xe.max(axis=1)
    found = np.full(len(pts), -1, dtype=np.int64)
    local = np.zeros((len(pts), 2))
    scale = max(float(np.ptp(x, axis=0).max()), 1.0)
    for k, p in enumerate(pts):
        cand = np.flatnonzero(((p >= lo - tol * scale) & (p <= hi + tol * scale)).all(axis=1))
        for e in cand:
            xi = _inverse_map(mesh.etype, xe[e], p)
            if xi is not None and _inside(mesh.etype, xi, 1e-9):
                found[k], local[k] = e, xi
                break
    return found, local


def _inverse_map(etype, xe, p, iters=30):
    xi = np.array([1 / 3, 1 / 3]) if etype == "tri" else np.zeros(2)
    for _ in range(iters):
        N, dN = shape_functions(etype, xi)
        r = N @ xe - p
        J = xe.T @ dN
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            return None
        xi = xi - step
        if np.abs(step).max() < 1e-14:
            break
    return xi


def _inside(etype, xi, tol):
    if etype == "quad":
        return bool(np.all(np.abs(xi) <= 1 + tol))
    return bool(xi[0] >= -tol and xi[1] >= -tol and xi.sum() <= 1 + tol)


def evaluate_at(mesh: Mesh, nodal: np.ndarray, elements: np.ndarray,
                local: np.ndarray) -> np.ndarray:
    """Interpolate nodal field(s) at located points (NaN where not found)."""
    N, _ = shape_functions(mesh.etype, local)
    vals = np.einsum("pa,pa...->p...", N, nodal[mesh.elements[np.maximum(elements, 0)]])
    vals = np.asarray(vals, dtype=float)
    vals[elements < 0] = np.nan
    return vals
