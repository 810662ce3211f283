"""Builders for the two benchmark cases: manufactured solution and cylinder wake."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .forms import MaterialParams, StabilizationConfig
from .mesh import (
    BoundaryCondition,
    Mesh,
    cylinder_channel_q1,
    generate_unit_square_p2p1,
    generate_unit_square_q1,
    load_mesh,
)
from .problem import FlowProblem
from .stepper import FlowState, initial_state
from .verification import ManufacturedSolution, mms_acceleration, mms_pressure, mms_velocity

CYLINDER_FIXTURE = "cylinder_q1.msh"
SQUARE_PATCHES = ("left", "right", "bottom", "top")


def mms_problem(n: int, kind: str = "q1", rho: float = 1.0, mu: float = 0.02) -> FlowProblem:
    """Unit square with the exact velocity on all sides and one pinned pressure.

    The pressure is pinned at node 0 (the corner at the origin).
    """
    mesh = generate_unit_square_q1(n) if kind == "q1" else generate_unit_square_p2p1(n)
    exact = ManufacturedSolution(rho, mu)
    bcs = [BoundaryCondition(p, "dirichlet", mms_velocity) for p in SQUARE_PATCHES]
    problem = FlowProblem(mesh, MaterialParams(rho, mu, exact.body_force), bcs)
    problem.dofmap.pin_pressure(0, mms_pressure)
    return problem


def mms_initial_state(problem: FlowProblem, exact_acceleration: bool = True) -> FlowState:
    """Zero velocity and pressure at t=0, acceleration from the exact field.

    The velocity and pressure of the manufactured solution vanish at t=0
    but its acceleration does not; starting from zero acceleration would
    degrade the generalised-alpha scheme to first order.
    """
    return initial_state(problem, None, None, mms_acceleration if exact_acceleration else None)


@dataclass(frozen=True)
class CylinderSetup:
    """Physical and boundary data of the flow past a cylinder.

    ``perturbation`` is the peak surface speed (relative to ``v_inf``) of a
    transient rotation of the cylinder during ``perturbation_window``. It
    breaks the symmetry of the wake so that shedding develops early; zero
    disables it.
    """

    re: float = 100.0
    v_inf: float = 1.0
    diameter: float = 1.0
    rho: float = 1.0
    ramp_time: float = 1.0
    perturbation: float = 0.5
    perturbation_window: tuple[float, float] = (2.0, 6.0)

    def __post_init__(self):
        if not (self.re > 0 and self.v_inf > 0 and self.diameter > 0 and self.rho > 0):
            raise ValueError("Re, v_inf, D and rho must be positive")

    @property
    def mu(self) -> float:
        return self.rho * self.v_inf * self.diameter / self.re

    def ramp(self, t: float) -> float:
        if self.ramp_time <= 0.0:
            return 1.0
        return float(min(max(t / self.ramp_time, 0.0), 1.0))

    def inlet(self, x, y, t):
        return np.full_like(np.asarray(y, dtype=float), self.v_inf * self.ramp(t)), 0.0

    def surface_speed(self, t: float) -> float:
        t0, t1 = self.perturbation_window
        if self.perturbation == 0.0 or not (t0 < t < t1):
            return 0.0
        return self.perturbation * self.v_inf * np.sin(np.pi * (t - t0) / (t1 - t0)) ** 2

    def cylinder_wall(self, x, y, t):
        # rigid rotation about the centre, tangential speed surface_speed(t)
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        w = self.surface_speed(t) / (0.5 * self.diameter)
        return -w * y, w * x


def cylinder_mesh() -> Mesh:
    """The packaged fixture mesh; regenerated with the defaults if absent."""
    try:
        ref = resources.files("nsfem").joinpath("data").joinpath(CYLINDER_FIXTURE)
        if ref.is_file():
            with resources.as_file(ref) as path:
                return load_mesh(path)
    except (ModuleNotFoundError, FileNotFoundError):
        pass
    return cylinder_channel_q1()


def cylinder_problem(setup: CylinderSetup, mesh: Mesh | None = None, stabilization=None) -> FlowProblem:
    """Channel with ramped uniform inflow, slip side walls and a free outlet."""
    if mesh is None:
        mesh = cylinder_mesh()
    bcs = [
        BoundaryCondition("inlet", "dirichlet", setup.inlet),
        BoundaryCondition("cylinder", "dirichlet", setup.cylinder_wall),
        BoundaryCondition("bottom", "slip"),
        BoundaryCondition("top", "slip"),
        BoundaryCondition("outlet", "traction"),
    ]
    if stabilization is None and mesh.kind == "q1":
        stabilization = StabilizationConfig(True)
    return FlowProblem(mesh, MaterialParams(setup.rho, setup.mu), bcs, stabilization)
