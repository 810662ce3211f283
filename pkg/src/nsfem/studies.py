"""The two experiment families as library calls: MMS time-step sweeps and cylinder runs."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .cases import CylinderSetup, cylinder_problem, mms_initial_state, mms_problem
from .forms import Convection
from .postprocess import InsufficientPeriodsError, amplitude, force_hook, strouhal
from .sparse import DirectSolver
from .stepper import FlowState, RunResult, initial_state, run_simulation
from .timeint import TimeScheme
from .verification import convergence_order, error_norms, slopes_above_floor

log = logging.getLogger(__name__)

MMS_T_END = 5.0


def fitted_dt(dt: float, t_end: float) -> float:
    """Largest step not above ``dt`` that divides ``t_end`` into whole steps."""
    if t_end <= 0:
        return dt
    n = math.ceil(t_end / dt - 1e-9)
    return t_end / n


@dataclass
class MmsRun:
    dt: float
    errors: dict
    mean_iterations: float
    wall_time: float


@dataclass
class SweepResult:
    scheme: str
    rho_inf: float
    convection: str
    runs: list[MmsRun]
    floor: dict | None = None

    @property
    def dts(self) -> list[float]:
        return [r.dt for r in self.runs]

    @property
    def errors(self) -> list[dict]:
        return [r.errors for r in self.runs]

    def slopes(self) -> dict | None:
        if len(self.runs) < 3:
            return None
        return convergence_order(self.errors, self.dts)

    def slopes_excluding_floor(self, factor: float = 5.0) -> dict | None:
        if self.floor is None:
            return self.slopes()
        return slopes_above_floor(self.errors, self.dts, self.floor, factor)

    @property
    def wall_time(self) -> float:
        return float(sum(r.wall_time for r in self.runs))


def mms_run(problem, scheme: TimeScheme, convection, t_end: float = MMS_T_END, exact_acceleration=True, solver=None, on_record=None, hooks=()):
    """One manufactured-solution run; returns error norms at ``t_end`` and the run."""
    solver = solver or DirectSolver()
    state = mms_initial_state(problem, exact_acceleration)
    start = time.perf_counter()
    res = run_simulation(problem, scheme, convection, state, t_end, hooks, solver, on_record)
    wall = time.perf_counter() - start
    errs = error_norms(problem, res.state, t_end)
    return MmsRun(scheme.dt, errs, res.mean_iterations, wall), res


def floor_errors(problem, scheme: str, rho_inf: float, convection, floor_dt: float, t_end: float = MMS_T_END, exact_acceleration=True, solver=None) -> dict:
    """Error of a run at the tiny step ``floor_dt``, i.e. the spatial error floor.

    A first-order scheme still carries visible temporal error at any
    affordable step, so BDF1 sweeps take their floor from BDF2.
    """
    if scheme == "bdf1":
        scheme = "bdf2"
    sch = TimeScheme(scheme, fitted_dt(floor_dt, t_end), rho_inf)
    return mms_run(problem, sch, convection, t_end, exact_acceleration, solver)[0].errors


def mms_sweep(
    n: int,
    scheme: str,
    rho_inf: float,
    convection,
    dts,
    element: str = "q1",
    floor_dt: float = 0.0,
    exact_acceleration: bool = True,
    problem=None,
    solver=None,
    t_end: float = MMS_T_END,
) -> SweepResult:
    """Run the MMS case for each step size (fitted so it divides ``t_end``).

    With ``floor_dt > 0`` an extra run at that step provides the spatial
    error floor used to exclude saturated points from the slopes (see
    ``floor_errors``).
    """
    problem = problem or mms_problem(n, element)
    solver = solver or DirectSolver()
    conv = Convection.parse(convection)
    runs = []
    for dt in dts:
        sch = TimeScheme(scheme, fitted_dt(dt, t_end), rho_inf)
        run, _ = mms_run(problem, sch, conv, t_end, exact_acceleration, solver)
        log.info("mms %s(%g) %s dt=%g %s", scheme, rho_inf, conv.value, sch.dt, run.errors)
        runs.append(run)
    floor = None
    if floor_dt > 0:
        floor = floor_errors(problem, scheme, rho_inf, conv, floor_dt, t_end, exact_acceleration, solver)
    return SweepResult(scheme, rho_inf, conv.value, runs, floor)


@dataclass
class CylinderResult:
    t: np.ndarray
    cd: np.ndarray
    cl: np.ndarray
    iterations: np.ndarray
    wall_time: float
    state: FlowState
    run: RunResult
    window_fraction: float = 0.25
    flags: list[str] = field(default_factory=list)
    cl_amplitude: float | None = None
    st: float | None = None

    @property
    def mean_cd(self) -> float:
        k = self.t >= self.t[-1] - self.window_fraction * (self.t[-1] - self.t[0])
        return float(self.cd[k].mean())

    def mean_iterations(self, after: float = 1.0) -> float:
        k = self.t > after + 1e-12
        if not k.any():
            k = slice(None)
        return float(self.iterations[k].mean())


def cylinder_run(
    setup: CylinderSetup,
    scheme: TimeScheme,
    convection,
    t_end: float,
    problem=None,
    state: FlowState | None = None,
    solver=None,
    on_record=None,
    window_fraction: float = 0.25,
    tangent: str = "frozen",
    hooks=(),
) -> CylinderResult:
    """Cylinder wake from rest (or ``state``) to ``t_end`` with force history.

    Extra ``hooks`` run after the force hook and may add keys to each record.
    """
    problem = problem or cylinder_problem(setup)
    state = state or initial_state(problem)
    solver = solver or DirectSolver()
    hook = force_hook("cylinder", setup.rho, setup.v_inf, setup.diameter)
    start = time.perf_counter()
    res = run_simulation(problem, scheme, convection, state, t_end, [hook, *hooks], solver, on_record, tangent=tangent)
    wall = time.perf_counter() - start
    rec = res.records
    out = CylinderResult(
        t=np.array([r["t"] for r in rec]),
        cd=np.array([r["CD"] for r in rec]),
        cl=np.array([r["CL"] for r in rec]),
        iterations=np.array([r["iters"] for r in rec]),
        wall_time=wall,
        state=res.state,
        run=res,
        window_fraction=window_fraction,
    )
    if len(rec) > 2:
        try:
            out.cl_amplitude = amplitude(out.t, out.cl, window_fraction)
            out.st = strouhal(out.t, out.cl, setup.diameter, setup.v_inf, window_fraction)
        except InsufficientPeriodsError as exc:
            out.flags.append(f"insufficient periods: {exc}")
    else:
        out.flags.append("insufficient periods: run too short")
    return out
