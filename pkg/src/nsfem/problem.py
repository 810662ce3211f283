"""A discretised flow problem: mesh + spaces + physics, built once per case."""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .basis import cell_tables, edge_tables
from .dofs import DofMap, build_dofmap
from .forms import GalerkinBlocks, MaterialParams, StabilizationConfig, galerkin_blocks
from .mesh import BoundaryCondition, Mesh, characteristic_length
from .sparse import build_pattern


class FlowProblem:
    """Everything about a case that stays fixed while time advances."""

    def __init__(
        self,
        mesh: Mesh,
        material: MaterialParams,
        bcs: list[BoundaryCondition] = (),
        stabilization: StabilizationConfig | None = None,
        pair: str | None = None,
    ):
        self.mesh = mesh
        self.material = material
        self.bcs = list(bcs)
        if stabilization is None:
            stabilization = StabilizationConfig(enabled=mesh.kind == "q1")
        if mesh.kind == "p2p1" and stabilization.enabled:
            raise ValueError("the inf-sup stable P2-P1 pair is used without stabilisation")
        self.stabilization = stabilization
        self.dofmap: DofMap = build_dofmap(mesh, pair, self.bcs)
        self.tables = cell_tables(mesh)
        self.h = characteristic_length(mesh)
        self.pcells = self.dofmap.pressure_index[mesh.vertex_cells]
        self._edges = {}

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs

    @cached_property
    def pattern(self):
        return build_pattern(self.dofmap.cell_dofs(), self.dofmap.n_dofs)

    @cached_property
    def blocks(self) -> GalerkinBlocks:
        return galerkin_blocks(self.tables)

    def edge_tables(self, patch: str):
        if patch not in self._edges:
            self._edges[patch] = edge_tables(self.mesh, patch)
        return self._edges[patch]

    def split(self, U: np.ndarray):
        """Velocity (interleaved) and pressure parts of a global vector."""
        nv = self.dofmap.n_velocity
        return U[:nv], U[nv:]

    def interpolate(self, velocity=None, pressure=None, t: float = 0.0) -> np.ndarray:
        """Nodal interpolant of analytic fields ``f(x, y, t)``."""
        U = np.zeros(self.n_dofs)
        xy = self.mesh.nodes
        if velocity is not None:
            vx, vy = velocity(xy[:, 0], xy[:, 1], t)
            U[0 : self.dofmap.n_velocity : 2] = vx
            U[1 : self.dofmap.n_velocity : 2] = vy
        if pressure is not None:
            pn = self.mesh.pressure_nodes
            U[self.dofmap.n_velocity + self.dofmap.pressure_index[pn]] = pressure(
                xy[pn, 0], xy[pn, 1], t
            )
        return U
