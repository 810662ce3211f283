"""Meshes for the Q1 and P2-P1 discretisations.

A :class:`Mesh` holds node coordinates, a cell connectivity array and named
boundary patches. Patches are stored as ``(cell, local_edge)`` pairs so the
edge geometry can always be recovered from the owning cell.

Local edge conventions
----------------------
Q1 quadrilateral, nodes counter-clockwise: edge ``k`` joins nodes ``k`` and
``(k + 1) % 4``.

P2 triangle, nodes ``0, 1, 2`` are the vertices (counter-clockwise) and
``3, 4, 5`` the midpoints of the edges opposite vertex ``0, 1, 2``. Edge
``k`` is the edge opposite vertex ``k``; it runs from vertex ``(k + 1) % 3``
to vertex ``(k + 2) % 3`` through midpoint node ``3 + k``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import brentq

KINDS = ("q1", "p2p1")
NODES_PER_CELL = {"q1": 4, "p2p1": 6}

# edge -> local node indices (end, end[, midpoint]) in traversal order
Q1_EDGES = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
P2_EDGES = np.array([[1, 2, 3], [2, 0, 4], [0, 1, 5]])


class MeshError(ValueError):
    """Raised when a mesh violates one of its structural invariants."""


class MeshFormatError(MeshError):
    """Raised for malformed mesh files; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary condition on a named patch.

    ``kind`` is one of ``"dirichlet"`` (both velocity components prescribed),
    ``"slip"`` (zero normal velocity, free tangential traction; axis-aligned
    patches only) or ``"traction"`` (prescribed pseudo-traction, zero when
    ``value`` is None).  ``value(x, y, t)`` returns a pair of arrays.
    """

    patch: str
    kind: str
    value: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "slip", "traction"):
            raise ValueError(f"unknown boundary condition kind {self.kind!r}")


def check_disjoint(bcs) -> None:
    """Dirichlet-type and traction patches must not overlap."""
    essential = {bc.patch for bc in bcs if bc.kind in ("dirichlet", "slip")}
    natural = {bc.patch for bc in bcs if bc.kind == "traction"}
    both = essential & natural
    if both:
        raise MeshError(f"patches {sorted(both)} carry both Dirichlet and traction conditions")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Unstructured 2D mesh of Q1 quadrilaterals or P2 triangles."""

    kind: str
    nodes: np.ndarray
    cells: np.ndarray
    patches: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MeshError(f"unknown mesh kind {self.kind!r}")
        nodes = np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, 2)
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        cells = cells.reshape(-1, NODES_PER_CELL[self.kind])
        patches = {
            name: np.asarray(p, dtype=np.int64).reshape(-1, 2)
            for name, p in self.patches.items()
        }
        for arr in (nodes, cells, *patches.values()):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "patches", patches)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def vertex_cells(self) -> np.ndarray:
        """Corner nodes of every cell (3 for triangles, 4 for quads)."""
        return self.cells if self.kind == "q1" else self.cells[:, :3]

    @property
    def pressure_nodes(self) -> np.ndarray:
        """Sorted node indices that carry a pressure unknown."""
        if self.kind == "q1":
            return np.arange(self.n_nodes)
        return np.unique(self.cells[:, :3])

    def edge_nodes(self, patch: str) -> np.ndarray:
        """Node indices of every edge on ``patch``, shape (n_edges, 2 or 3)."""
        pairs = self.patches[patch]
        table = Q1_EDGES if self.kind == "q1" else P2_EDGES
        return self.cells[pairs[:, 0][:, None], table[pairs[:, 1]]]

    def patch_nodes(self, patch: str) -> np.ndarray:
        return np.unique(self.edge_nodes(patch))

    def validate(self) -> None:
        """Check every structural invariant, raising :class:`MeshError`."""
        n = self.n_nodes
        bad = np.nonzero((self.cells < 0) | (self.cells >= n))[0]
        if bad.size:
            raise MeshError(f"cell {bad[0]} references a node index outside [0, {n})")
        for name, pairs in self.patches.items():
            if pairs.size == 0:
                continue
            if pairs[:, 0].min() < 0 or pairs[:, 0].max() >= self.n_cells:
                raise MeshError(f"patch {name!r} references a cell index out of range")
            nedge = 4 if self.kind == "q1" else 3
            if pairs[:, 1].min() < 0 or pairs[:, 1].max() >= nedge:
                raise MeshError(f"patch {name!r} references a local edge out of range")
        from .basis import cell_jacobian_dets

        detj = cell_jacobian_dets(self)
        bad = np.nonzero((detj <= 0).any(axis=1))[0]
        if bad.size:
            raise MeshError(f"cell {bad[0]} has a non-positive Jacobian determinant")

        keys = self._edge_keys()
        uniq, cnt = np.unique(keys, return_counts=True)
        if (cnt > 2).any():
            raise MeshError("an edge is shared by more than two cells")
        for name, pairs in self.patches.items():
            if pairs.size == 0:
                continue
            pos = np.searchsorted(uniq, keys[pairs[:, 0], pairs[:, 1]])
            if (cnt[pos] != 1).any():
                raise MeshError(f"patch {name!r} contains an interior edge")

    def _edge_keys(self) -> np.ndarray:
        """Integer key per (cell, local edge) built from its two corner nodes."""
        verts = self.vertex_cells
        if self.kind == "q1":
            a, b = verts, np.roll(verts, -1, axis=1)
        else:
            a, b = verts[:, [1, 2, 0]], verts[:, [2, 0, 1]]
        return np.minimum(a, b) * self.n_nodes + np.maximum(a, b)

    def _edge_counts(self) -> np.ndarray:
        _, cnt = np.unique(self._edge_keys(), return_counts=True)
        return cnt

    def boundary_edge_count(self) -> int:
        return int((self._edge_counts() == 1).sum())


def characteristic_length(mesh: Mesh, cell: int | None = None):
    """Element length ``h = sqrt(4 A / pi)`` from the quadrature area ``A``.

    Returns a float for a single cell, or an array over all cells when
    ``cell`` is None.
    """
    areas = cell_areas(mesh)
    h = np.sqrt(4.0 * areas / np.pi)
    return h if cell is None else float(h[cell])


def cell_areas(mesh: Mesh) -> np.ndarray:
    from .basis import cell_jacobian_dets, quadrature_rule

    _, w = quadrature_rule("q1" if mesh.kind == "q1" else "p2")
    return cell_jacobian_dets(mesh) @ w


# ---------------------------------------------------------------------------
# structured generators


def _grid_node_ids(nx: int, ny: int) -> np.ndarray:
    return np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)


def _rect_q1(xs: np.ndarray, ys: np.ndarray):
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    ids = _grid_node_ids(nx, ny)
    cells = np.stack(
        [ids[:-1, :-1], ids[:-1, 1:], ids[1:, 1:], ids[1:, :-1]], axis=-1
    ).reshape(-1, 4)
    cell_id = np.arange(nx * ny).reshape(ny, nx)
    patches = {
        "bottom": np.column_stack([cell_id[0, :], np.full(nx, 0)]),
        "right": np.column_stack([cell_id[:, -1], np.full(ny, 1)]),
        "top": np.column_stack([cell_id[-1, :], np.full(nx, 2)]),
        "left": np.column_stack([cell_id[:, 0], np.full(ny, 3)]),
    }
    return nodes, cells, patches


def generate_unit_square_q1(n: int) -> Mesh:
    """``n x n`` Q1 mesh of the unit square with patches left/right/bottom/top."""
    if n < 1:
        raise ValueError("n must be at least 1")
    s = np.linspace(0.0, 1.0, n + 1)
    nodes, cells, patches = _rect_q1(s, s)
    return Mesh("q1", nodes, cells, patches)


def generate_unit_square_p2p1(n: int) -> Mesh:
    """``n x n`` quads, each split along its lower-left/upper-right diagonal.

    Vertex nodes come first (``(n+1)**2`` of them), followed by the edge
    midpoints, so the pressure nodes are exactly ``range((n + 1)**2)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    s = np.linspace(0.0, 1.0, n + 1)
    vnodes, quads, qpatches = _rect_q1(s, s)
    v00, v10, v11, v01 = quads.T
    tris = np.concatenate(
        [np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)[:, :]], axis=0
    )
    # interleave so that quad q owns triangles 2q and 2q + 1
    nq = len(quads)
    order = np.empty(2 * nq, dtype=np.int64)
    order[0::2] = np.arange(nq)
    order[1::2] = np.arange(nq) + nq
    tris = tris[order]

    a = tris[:, [1, 2, 0]]
    b = tris[:, [2, 0, 1]]
    keys = np.minimum(a, b) * len(vnodes) + np.maximum(a, b)
    uniq, inv = np.unique(keys.ravel(), return_inverse=True)
    lo, hi = np.divmod(uniq, len(vnodes))
    mids = 0.5 * (vnodes[lo] + vnodes[hi])
    nodes = np.vstack([vnodes, mids])
    cells = np.hstack([tris, len(vnodes) + inv.reshape(-1, 3)])

    # quad edge -> triangle edge: bottom(0) and right(1) belong to the first
    # triangle (edges 2 and 0), top(2) and left(3) to the second (edges 0, 1)
    remap = {0: (0, 2), 1: (0, 0), 2: (1, 0), 3: (1, 1)}
    patches = {}
    for name, pairs in qpatches.items():
        le = int(pairs[0, 1])
        which, tedge = remap[le]
        patches[name] = np.column_stack(
            [2 * pairs[:, 0] + which, np.full(len(pairs), tedge)]
        )
    return Mesh("p2p1", nodes, cells, patches)


def _graded(length: float, n: int, first: float) -> np.ndarray:
    """Cumulative positions of ``n`` geometrically growing cells."""
    if abs(n * first - length) < 1e-12:
        return np.linspace(0.0, length, n + 1)

    def total(r):
        return first * (r**n - 1.0) / (r - 1.0) - length

    r = brentq(total, 1.0 + 1e-9, 3.0)
    sizes = first * r ** np.arange(n)
    pos = np.concatenate([[0.0], np.cumsum(sizes)])
    pos[-1] = length
    return pos


def cylinder_channel_q1(
    upstream: float = 8.0,
    downstream: float = 25.0,
    half_width: float = 8.0,
    diameter: float = 1.0,
    box: float = 2.0,
    n_box: int = 40,
    n_radial: int = 20,
    n_upstream: int = 16,
    n_downstream: int = 94,
    n_lateral: int = 16,
    radial_growth: float = 1.12,
) -> Mesh:
    """Block-structured Q1 mesh of a channel around a circular cylinder.

    The cylinder (centre at the origin) sits inside a square box of half
    size ``box`` meshed as an O-grid with ``4 * n_box`` edges on the
    circle. Outside the box, a tensor grid is graded geometrically away from
    the box. The defaults give 12400 cells and 160 cylinder edges on
    ``[-8, 25] x [-8, 8]``. Patches: inlet, outlet, bottom, top, cylinder.
    """
    d0 = 2.0 * box / n_box
    xl = -box - _graded(upstream - box, n_upstream, d0)[::-1]
    xr = box + _graded(downstream - box, n_downstream, d0)
    yb = -box - _graded(half_width - box, n_lateral, d0)[::-1]
    yt = box + _graded(half_width - box, n_lateral, d0)
    xm = np.linspace(-box, box, n_box + 1)
    xs = np.concatenate([xl[:-1], xm, xr[1:]])
    ys = np.concatenate([yb[:-1], xm, yt[1:]])
    nx, ny = len(xs) - 1, len(ys) - 1
    i0, i1 = n_upstream, n_upstream + n_box
    j0, j1 = n_lateral, n_lateral + n_box

    gnodes, gcells, gpatches = _rect_q1(xs, ys)
    ids = _grid_node_ids(nx, ny)
    jj, ii = np.divmod(np.arange(len(gnodes)), nx + 1)
    hole = (ii > i0) & (ii < i1) & (jj > j0) & (jj < j1)
    keep_nodes = np.nonzero(~hole)[0]
    newid = np.full(len(gnodes), -1)
    newid[keep_nodes] = np.arange(len(keep_nodes))
    cj, ci = np.divmod(np.arange(nx * ny), nx)
    box_cell = (ci >= i0) & (ci < i1) & (cj >= j0) & (cj < j1)
    keep_cells = np.nonzero(~box_cell)[0]
    cell_new = np.full(nx * ny, -1)
    cell_new[keep_cells] = np.arange(len(keep_cells))
    nodes = [gnodes[keep_nodes]]
    cells = [newid[gcells[keep_cells]]]
    patches = {
        "inlet": gpatches["left"],
        "outlet": gpatches["right"],
        "bottom": gpatches["bottom"],
        "top": gpatches["top"],
    }
    patches = {k: np.column_stack([cell_new[v[:, 0]], v[:, 1]]) for k, v in patches.items()}

    # box boundary, counter-clockwise from the middle of the right side
    nb = 4 * n_box
    half = n_box // 2
    ring = []
    ring += [ids[j0 + half + k, i1] for k in range(half)]
    ring += [ids[j1, i1 - k] for k in range(n_box)]
    ring += [ids[j1 - k, i0] for k in range(n_box)]
    ring += [ids[j0, i0 + k] for k in range(n_box)]
    ring += [ids[j0 + k, i1] for k in range(half)]
    ring = newid[np.array(ring)]
    outer = nodes[0][ring]

    theta = 2.0 * np.pi * np.arange(nb) / nb
    circle = 0.5 * diameter * np.column_stack([np.cos(theta), np.sin(theta)])
    g = radial_growth
    s = (g ** np.arange(n_radial + 1) - 1.0) / (g**n_radial - 1.0)
    layer_ids = np.empty((n_radial + 1, nb), dtype=np.int64)
    layer_ids[-1] = ring
    count = len(nodes[0])
    for j in range(n_radial):
        pts = (1.0 - s[j]) * circle + s[j] * outer
        nodes.append(pts)
        layer_ids[j] = count + np.arange(nb)
        count += nb
    k = np.arange(nb)
    kp = (k + 1) % nb
    ocells = np.stack(
        [layer_ids[:-1, k], layer_ids[1:, k], layer_ids[1:, kp], layer_ids[:-1, kp]], -1
    ).reshape(-1, 4)
    first_ocell = len(cells[0])
    cells.append(ocells)
    patches["cylinder"] = np.column_stack(
        [first_ocell + np.arange(nb), np.full(nb, 3)]
    )
    return Mesh("q1", np.vstack(nodes), np.vstack(cells), patches)


# ---------------------------------------------------------------------------
# file format

_HEADER = re.compile(r"^ns-mesh\s+1\s+(\S+)$")


def save_mesh(mesh: Mesh, path) -> None:
    """Write ``mesh`` in the plain-text ``ns-mesh 1`` format."""
    path = Path(path)
    with path.open("w") as f:
        f.write(f"ns-mesh 1 {mesh.kind}\n")
        f.write(f"nodes {mesh.n_nodes}\n")
        np.savetxt(f, mesh.nodes, fmt="%.17g")
        f.write(f"cells {mesh.n_cells}\n")
        np.savetxt(f, mesh.cells, fmt="%d")
        for name, pairs in mesh.patches.items():
            f.write(f"patch {name} {len(pairs)}\n")
            np.savetxt(f, pairs, fmt="%d")


def load_mesh(path) -> Mesh:
    """Read and validate a mesh in the ``ns-mesh 1`` text format.

    The format is whitespace delimited with ``#`` comments::

        ns-mesh 1 <q1|p2p1>
        nodes <N>
        x y                  (N lines)
        cells <M>
        i0 i1 ...            (M lines, 0-based)
        patch <name> <K>
        cell local_edge      (K lines, repeated per patch)
    """
    path = Path(path)
    lines = []
    with path.open() as f:
        for lineno, raw in enumerate(f, 1):
            text = raw.split("#", 1)[0].strip()
            if text:
                lines.append((lineno, text))
    if not lines:
        raise MeshFormatError(1, "empty mesh file")

    it = iter(lines)
    lineno, text = next(it)
    m = _HEADER.match(text)
    if not m:
        raise MeshFormatError(lineno, "expected header 'ns-mesh 1 <kind>'")
    kind = m.group(1)
    if kind not in KINDS:
        raise MeshFormatError(lineno, f"unknown mesh kind {kind!r}")
    width = NODES_PER_CELL[kind]

    def section(keyword, nfields):
        try:
            lineno, text = next(it)
        except StopIteration:
            raise MeshFormatError(lines[-1][0], f"missing '{keyword}' section") from None
        parts = text.split()
        if parts[0] != keyword or len(parts) != nfields:
            raise MeshFormatError(lineno, f"expected '{keyword}' section header")
        return lineno, parts

    def rows(count, ncols, conv):
        out = []
        for _ in range(count):
            try:
                lineno, text = next(it)
            except StopIteration:
                raise MeshFormatError(lines[-1][0], "unexpected end of file") from None
            parts = text.split()
            if len(parts) != ncols:
                raise MeshFormatError(lineno, f"expected {ncols} values, got {len(parts)}")
            try:
                out.append([conv(p) for p in parts])
            except ValueError:
                raise MeshFormatError(lineno, f"cannot parse {text!r}") from None
        return out

    def count_of(lineno, token):
        try:
            value = int(token)
        except ValueError:
            raise MeshFormatError(lineno, f"bad count {token!r}") from None
        if value < 0:
            raise MeshFormatError(lineno, "negative count")
        return value

    lineno, parts = section("nodes", 2)
    nodes = rows(count_of(lineno, parts[1]), 2, float)
    lineno, parts = section("cells", 2)
    cells = rows(count_of(lineno, parts[1]), width, int)
    patches = {}
    for lineno, text in it:
        parts = text.split()
        if parts[0] != "patch" or len(parts) != 3:
            raise MeshFormatError(lineno, "expected 'patch <name> <count>'")
        if parts[1] in patches:
            raise MeshFormatError(lineno, f"duplicate patch {parts[1]!r}")
        patches[parts[1]] = np.array(rows(count_of(lineno, parts[2]), 2, int), dtype=np.int64).reshape(-1, 2)

    mesh = Mesh(kind, np.array(nodes, dtype=float).reshape(-1, 2), np.array(cells, dtype=np.int64).reshape(-1, width), patches)
    mesh.validate()
    return mesh
