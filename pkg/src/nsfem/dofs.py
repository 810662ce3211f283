"""Degree-of-freedom numbering for the Q1Q1 and P2P1 pairs.

Velocity unknowns come first, interleaved by node (``2 * node + c``), then
one pressure unknown per pressure node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import Mesh, check_disjoint


@dataclass
class DirichletGroup:
    """Prescribed velocity component on a set of nodes."""

    nodes: np.ndarray
    component: int
    value: Callable | None  # None means homogeneous

    @property
    def dofs(self) -> np.ndarray:
        return 2 * self.nodes + self.component


@dataclass
class DofMap:
    mesh: Mesh
    pair: str
    n_velocity: int
    pressure_index: np.ndarray  # node -> pressure slot, -1 if none
    groups: list[DirichletGroup] = field(default_factory=list)
    pressure_pins: list[tuple[int, Callable]] = field(default_factory=list)

    @property
    def n_pressure(self) -> int:
        return int((self.pressure_index >= 0).sum())

    @property
    def n_dofs(self) -> int:
        return self.n_velocity + self.n_pressure

    @property
    def pressure_offset(self) -> int:
        return self.n_velocity

    def velocity_dofs(self, node) -> np.ndarray:
        node = np.asarray(node)
        return np.stack([2 * node, 2 * node + 1], -1)

    def pressure_dof(self, node):
        idx = self.pressure_index[node]
        if np.any(idx < 0):
            raise KeyError("node carries no pressure unknown")
        return self.n_velocity + idx

    def cell_dofs(self) -> np.ndarray:
        """Local-to-global map ``(n_cells, 2 * nv + np)``.

        Local ordering: x-velocity at every velocity node, then y-velocity,
        then pressure.
        """
        cells = self.mesh.cells
        pcells = self.mesh.vertex_cells
        return np.hstack(
            [2 * cells, 2 * cells + 1, self.n_velocity + self.pressure_index[pcells]]
        )

    def pin_pressure(self, node: int, value: Callable) -> None:
        """Fix the pressure at ``node`` to ``value(x, y, t)``."""
        self.pressure_pins.append((int(node), value))

    def dirichlet_dofs(self) -> np.ndarray:
        parts = [g.dofs for g in self.groups]
        parts += [np.array([self.pressure_dof(n)]) for n, _ in self.pressure_pins]
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(parts))

    def dirichlet_values(self, t: float):
        """Constrained dofs and their prescribed values at time ``t``.

        Later groups override earlier ones on shared dofs, so full Dirichlet
        patches (added last) win over slip patches at corners.
        """
        values = {}
        xy = self.mesh.nodes
        for g in self.groups:
            if g.value is None:
                vals = np.zeros(len(g.nodes))
            else:
                vx, vy = g.value(xy[g.nodes, 0], xy[g.nodes, 1], t)
                comp = vx if g.component == 0 else vy
                vals = np.broadcast_to(np.asarray(comp, dtype=float), g.nodes.shape)
            values.update(zip(g.dofs.tolist(), vals.tolist()))
        for node, fn in self.pressure_pins:
            values[int(self.pressure_dof(node))] = float(fn(xy[node, 0], xy[node, 1], t))
        dofs = np.array(sorted(values), dtype=np.int64)
        return dofs, np.array([values[d] for d in dofs.tolist()], dtype=float)


def _patch_normal_axis(mesh: Mesh, patch: str) -> int:
    ends = mesh.nodes[mesh.edge_nodes(patch)[:, :2]]
    d = np.abs(ends[:, 1] - ends[:, 0])
    scale = d.max() if d.size else 1.0
    if np.all(d[:, 1] <= 1e-12 * scale):
        return 1
    if np.all(d[:, 0] <= 1e-12 * scale):
        return 0
    raise ValueError(f"slip condition on patch {patch!r} needs an axis-aligned patch")


def build_dofmap(mesh: Mesh, pair: str | None = None, bcs=()) -> DofMap:
    """Number the unknowns of ``mesh`` and record its Dirichlet constraints."""
    pair = (pair or ("q1q1" if mesh.kind == "q1" else "p2p1")).lower()
    expected = {"q1q1": "q1", "p2p1": "p2p1"}
    if expected.get(pair) != mesh.kind:
        raise ValueError(f"element pair {pair!r} does not match a {mesh.kind} mesh")
    bcs = list(bcs)
    for bc in bcs:
        if bc.patch not in mesh.patches:
            raise KeyError(f"unknown patch {bc.patch!r}")
    check_disjoint(bcs)

    pidx = np.full(mesh.n_nodes, -1, dtype=np.int64)
    pn = mesh.pressure_nodes
    pidx[pn] = np.arange(len(pn))
    dm = DofMap(mesh, pair, 2 * mesh.n_nodes, pidx)

    # slip first so full Dirichlet patches override at shared corners
    for bc in sorted(bcs, key=lambda b: {"slip": 0, "dirichlet": 1}.get(b.kind, 2)):
        nodes = mesh.patch_nodes(bc.patch)
        if bc.kind == "slip":
            axis = _patch_normal_axis(mesh, bc.patch)
            dm.groups.append(DirichletGroup(nodes, axis, None))
        elif bc.kind == "dirichlet":
            dm.groups.append(DirichletGroup(nodes, 0, bc.value))
            dm.groups.append(DirichletGroup(nodes, 1, bc.value))
    return dm
