"""Reference shape functions, quadrature and the physical mapping.

Reference elements: the quadrilateral is ``[-1, 1]^2`` with nodes
counter-clockwise from ``(-1, -1)``; the triangle has vertices ``(0, 0)``,
``(1, 0)``, ``(0, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

Q1_REF_NODES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
TRI_REF_NODES = np.array(
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.0, 0.5], [0.5, 0.0]]
)


class InvertedElementError(ValueError):
    """Raised when a cell map has a non-positive Jacobian determinant."""


@dataclass
class ShapeEval:
    """Shape functions evaluated at one or more points.

    Arrays carry a leading point axis: ``values`` is ``(npts, nnodes)``,
    ``grads_ref`` / ``grads_phys`` are ``(npts, nnodes, 2)`` and
    ``second_derivs_phys`` is ``(npts, nnodes, 2, 2)``.
    """

    values: np.ndarray
    grads_ref: np.ndarray
    second_ref: np.ndarray | None = None
    grads_phys: np.ndarray | None = None
    second_derivs_phys: np.ndarray | None = None
    jacobian_det: np.ndarray | None = None


def eval_shape(kind: str, points) -> ShapeEval:
    """Evaluate Lagrange shape functions of ``kind`` (Q1, P1 or P2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xi, eta = pts[:, 0], pts[:, 1]
    kind = kind.upper()
    if kind == "Q1":
        sx, sy = Q1_REF_NODES[:, 0], Q1_REF_NODES[:, 1]
        fx = 1.0 + np.outer(xi, sx)
        fy = 1.0 + np.outer(eta, sy)
        values = 0.25 * fx * fy
        grads = np.stack([0.25 * sx * fy, 0.25 * sy * fx], axis=-1)
        second = np.zeros(values.shape + (2, 2))
        second[..., 0, 1] = second[..., 1, 0] = 0.25 * sx * sy
        return ShapeEval(values, grads, second)
    l0 = 1.0 - xi - eta
    lam = np.stack([l0, xi, eta], axis=-1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if kind == "P1":
        grads = np.broadcast_to(dlam, (len(pts), 3, 2)).copy()
        return ShapeEval(lam, grads, np.zeros((len(pts), 3, 2, 2)))
    if kind != "P2":
        raise ValueError(f"unknown element kind {kind!r}")
    pairs = [(1, 2), (2, 0), (0, 1)]
    vals = [lam[:, i] * (2.0 * lam[:, i] - 1.0) for i in range(3)]
    vals += [4.0 * lam[:, i] * lam[:, j] for i, j in pairs]
    grads = [(4.0 * lam[:, i] - 1.0)[:, None] * dlam[i] for i in range(3)]
    grads += [
        4.0 * (lam[:, j][:, None] * dlam[i] + lam[:, i][:, None] * dlam[j])
        for i, j in pairs
    ]
    second = [4.0 * np.outer(dlam[i], dlam[i]) for i in range(3)]
    second += [4.0 * (np.outer(dlam[i], dlam[j]) + np.outer(dlam[j], dlam[i])) for i, j in pairs]
    second = np.broadcast_to(np.array(second), (len(pts), 6, 2, 2)).copy()
    return ShapeEval(np.stack(vals, -1), np.stack(grads, 1), second)


def gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def quadrature_rule(kind: str, order: int | None = None):
    """Return ``(points, weights)`` on the reference element.

    ``"q1"``: tensor Gauss rule, 2x2 by default (``order`` points per
    direction). ``"p2"``/``"p1"``/``"tri"``: the 7-point degree-5 rule.
    """
    kind = kind.lower()
    if kind in ("q1", "quad"):
        x, w = gauss_legendre(order or 2)
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w)
        return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()
    if kind in ("p1", "p2", "p2p1", "tri"):
        r15 = np.sqrt(15.0)
        a1, a2 = (6.0 - r15) / 21.0, (6.0 + r15) / 21.0
        w1, w2 = (155.0 - r15) / 2400.0, (155.0 + r15) / 2400.0
        pts = [
            [1.0 / 3.0, 1.0 / 3.0],
            [a1, a1], [1.0 - 2.0 * a1, a1], [a1, 1.0 - 2.0 * a1],
            [a2, a2], [1.0 - 2.0 * a2, a2], [a2, 1.0 - 2.0 * a2],
        ]
        wts = [9.0 / 80.0] + [w1] * 3 + [w2] * 3
        return np.array(pts), np.array(wts)
    raise ValueError(f"unknown quadrature kind {kind!r}")


def geometry_kind(mesh_kind: str) -> str:
    """Shape family used for the geometric map of a mesh kind."""
    return "Q1" if mesh_kind == "q1" else "P1"


def map_to_physical(cell_coords, ref: ShapeEval, geom: ShapeEval | None = None) -> ShapeEval:
    """Map reference derivatives to physical ones on a single cell.

    ``cell_coords`` are the coordinates of the cell's geometric nodes
    (4 for quads, the 3 vertices or all 6 P2 nodes for triangles; only the
    vertices are used). ``geom`` evaluates the geometry basis at the same
    points and defaults to ``ref`` when the node counts match.
    """
    X = np.asarray(cell_coords, dtype=float)
    if geom is None:
        if len(X) == 4:
            geom = ref if ref.values.shape[1] == 4 else None
        if geom is None:
            npts = ref.values.shape[0]
            geom = eval_shape("P1", np.zeros((npts, 2)))
    X = X[: geom.values.shape[1]]
    # J[p, i, j] = dx_i / dxi_j
    J = np.einsum("pai,aj->pji", geom.grads_ref, X)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if (det <= 0).any():
        raise InvertedElementError("cell has a non-positive Jacobian determinant")
    Jinv = np.linalg.inv(J)
    grads = np.einsum("pai,pij->paj", ref.grads_ref, Jinv)
    second = None
    if ref.second_ref is not None and ref.values.shape[1] == 6:
        second = np.einsum("pki,pakl,plj->paij", Jinv, ref.second_ref, Jinv)
    return ShapeEval(
        ref.values, ref.grads_ref, ref.second_ref, grads, second, det
    )


def _jacobians(mesh: Mesh, points: np.ndarray):
    geom = eval_shape(geometry_kind(mesh.kind), points)
    X = mesh.nodes[mesh.vertex_cells]  # (ne, nv, 2)
    J = np.einsum("qai,eaj->eqji", geom.grads_ref, X)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return geom, X, J, det


def cell_jacobian_dets(mesh: Mesh, points: np.ndarray | None = None) -> np.ndarray:
    """Jacobian determinants ``(n_cells, n_points)`` at quadrature points."""
    if points is None:
        points, _ = quadrature_rule(mesh.kind)
    return _jacobians(mesh, points)[3]


@dataclass
class CellTables:
    """Basis data on every cell at a common set of reference points.

    ``vel_*`` refer to the velocity basis (Q1 or P2), ``pre_*`` to the
    pressure basis (Q1 or P1). ``vel_hess`` is None for Q1.
    """

    points: np.ndarray
    weights: np.ndarray
    xq: np.ndarray
    wdet: np.ndarray
    vel_val: np.ndarray
    vel_grad: np.ndarray
    vel_hess: np.ndarray | None
    pre_val: np.ndarray
    pre_grad: np.ndarray


def velocity_kind(mesh_kind: str) -> str:
    return "Q1" if mesh_kind == "q1" else "P2"


def pressure_kind(mesh_kind: str) -> str:
    return "Q1" if mesh_kind == "q1" else "P1"


def cell_tables(mesh: Mesh, points=None, weights=None) -> CellTables:
    """Evaluate velocity and pressure bases on all cells at once."""
    if points is None:
        points, weights = quadrature_rule(mesh.kind)
    points = np.atleast_2d(points)
    if weights is None:
        weights = np.zeros(len(points))
    geom, X, J, det = _jacobians(mesh, points)
    if (det <= 0).any():
        bad = int(np.nonzero((det <= 0).any(axis=1))[0][0])
        raise InvertedElementError(f"cell {bad} has a non-positive Jacobian determinant")
    Jinv = np.linalg.inv(J)
    xq = np.einsum("qa,eai->eqi", geom.values, X)
    vel = eval_shape(velocity_kind(mesh.kind), points)
    pre = eval_shape(pressure_kind(mesh.kind), points)
    vel_grad = np.einsum("qai,eqij->eqaj", vel.grads_ref, Jinv)
    pre_grad = np.einsum("qai,eqij->eqaj", pre.grads_ref, Jinv)
    vel_hess = None
    if mesh.kind == "p2p1":
        # straight-sided triangles: Jinv is constant per cell
        vel_hess = np.einsum("eqki,qakl,eqlj->eqaij", Jinv, vel.second_ref, Jinv)
    return CellTables(
        points=points,
        weights=weights,
        xq=xq,
        wdet=det * weights,
        vel_val=vel.values,
        vel_grad=vel_grad,
        vel_hess=vel_hess,
        pre_val=pre.values,
        pre_grad=pre_grad,
    )


def edge_rule(mesh_kind: str, local_edge: int, npts: int = 3):
    """Gauss points on a reference edge.

    Returns ``(points, weights, tangent)`` where ``tangent`` is the
    reference-space derivative of the edge parametrisation ``s in [-1, 1]``.
    """
    s, w = gauss_legendre(npts)
    if mesh_kind == "q1":
        a = Q1_REF_NODES[local_edge]
        b = Q1_REF_NODES[(local_edge + 1) % 4]
    else:
        a = TRI_REF_NODES[(local_edge + 1) % 3]
        b = TRI_REF_NODES[(local_edge + 2) % 3]
    pts = 0.5 * (1.0 - s)[:, None] * a + 0.5 * (1.0 + s)[:, None] * b
    return pts, w, 0.5 * (b - a)


@dataclass
class EdgeTables:
    """Basis data on boundary edges of a patch, at edge Gauss points."""

    cells: np.ndarray
    xq: np.ndarray
    normal: np.ndarray
    wlen: np.ndarray
    vel_val: np.ndarray
    vel_grad: np.ndarray
    pre_val: np.ndarray


def edge_tables(mesh: Mesh, patch: str, npts: int = 3) -> EdgeTables:
    """Evaluate bases on every edge of ``patch`` with the fluid outward normal."""
    pairs = mesh.patches[patch]
    nq = npts
    ne = len(pairs)
    xq = np.zeros((ne, nq, 2))
    normal = np.zeros((ne, nq, 2))
    wlen = np.zeros((ne, nq))
    nvel = 4 if mesh.kind == "q1" else 6
    npre = 4 if mesh.kind == "q1" else 3
    vel_val = np.zeros((ne, nq, nvel))
    vel_grad = np.zeros((ne, nq, nvel, 2))
    pre_val = np.zeros((ne, nq, npre))
    nedges = 4 if mesh.kind == "q1" else 3
    for le in range(nedges):
        sel = np.nonzero(pairs[:, 1] == le)[0]
        if sel.size == 0:
            continue
        pts, w, dref = edge_rule(mesh.kind, le, npts)
        geom, X, J, det = _jacobians(_SubMesh(mesh, pairs[sel, 0]), pts)
        Jinv = np.linalg.inv(J)
        tan = np.einsum("eqij,j->eqi", J, dref)
        length = np.linalg.norm(tan, axis=-1)
        # counter-clockwise traversal: outward normal is the tangent rotated by -90 deg
        normal[sel] = np.stack([tan[..., 1], -tan[..., 0]], -1) / length[..., None]
        wlen[sel] = length * w
        xq[sel] = np.einsum("qa,eai->eqi", geom.values, X)
        vel = eval_shape(velocity_kind(mesh.kind), pts)
        pre = eval_shape(pressure_kind(mesh.kind), pts)
        vel_val[sel] = vel.values
        vel_grad[sel] = np.einsum("qai,eqij->eqaj", vel.grads_ref, Jinv)
        pre_val[sel] = pre.values
    return EdgeTables(pairs[:, 0], xq, normal, wlen, vel_val, vel_grad, pre_val)


class _SubMesh:
    """Minimal mesh view restricted to a subset of cells."""

    def __init__(self, mesh: Mesh, cells: np.ndarray):
        self.kind = mesh.kind
        self.nodes = mesh.nodes
        self.vertex_cells = mesh.vertex_cells[cells]
