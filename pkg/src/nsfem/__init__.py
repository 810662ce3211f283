"""Finite-element solver for 2D incompressible Navier-Stokes flow.

Stabilised equal-order Q1 and Taylor-Hood P2-P1 elements, BDF and
generalized-alpha time stepping, and a choice of convection treatments
from full Newton to single-solve linearisations.
"""

from .cases import CylinderSetup, cylinder_problem, mms_problem
from .forms import Convection, MaterialParams, StabilizationConfig
from .mesh import BoundaryCondition, Mesh, load_mesh, save_mesh
from .problem import FlowProblem
from .stepper import FlowState, advance, initial_state, run_simulation
from .timeint import TimeScheme

__version__ = "0.1.0"

__all__ = [
    "BoundaryCondition",
    "Convection",
    "CylinderSetup",
    "FlowProblem",
    "FlowState",
    "MaterialParams",
    "Mesh",
    "StabilizationConfig",
    "TimeScheme",
    "advance",
    "cylinder_problem",
    "initial_state",
    "load_mesh",
    "mms_problem",
    "run_simulation",
    "save_mesh",
]
