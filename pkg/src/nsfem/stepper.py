"""Time stepping: Newton loop or single linear solve per step, plus checkpoints."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .forms import Convection, Levels, assemble_step_system
from .sparse import DirectSolver
from .timeint import TimeScheme, new_acceleration

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 25
CHECKPOINT_MAGIC = "nsfem-checkpoint"
CHECKPOINT_VERSION = 1


class NewtonError(RuntimeError):
    """Newton iterations did not reach the residual tolerance."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


@dataclass
class FlowState:
    """Solution levels carried between steps (global dof layout)."""

    v: np.ndarray
    p: np.ndarray
    a: np.ndarray
    v_prev: np.ndarray | None = None
    t: float = 0.0
    step: int = 0

    @property
    def U(self) -> np.ndarray:
        return np.concatenate([self.v, self.p])

    def copy(self) -> "FlowState":
        return FlowState(
            self.v.copy(),
            self.p.copy(),
            self.a.copy(),
            None if self.v_prev is None else self.v_prev.copy(),
            self.t,
            self.step,
        )


@dataclass(frozen=True)
class StepReport:
    iterations: int
    residual: float
    wall_time: float
    solves: int = 1


def initial_state(problem, velocity=None, pressure=None, acceleration=None, t0: float = 0.0) -> FlowState:
    """State at ``t0`` from analytic fields (zero where not given)."""
    nv = problem.dofmap.n_velocity
    U = problem.interpolate(velocity, pressure, t0)
    A = problem.interpolate(acceleration, None, t0) if acceleration is not None else np.zeros_like(U)
    return FlowState(U[:nv].copy(), U[nv:].copy(), A[:nv].copy(), None, float(t0), 0)


def advance(
    problem,
    state: FlowState,
    scheme: TimeScheme,
    treatment,
    solver: DirectSolver | None = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    tangent: str = "frozen",
) -> tuple[FlowState, StepReport]:
    """One step from ``t_n`` to ``t_n + dt``.

    The standard treatment iterates until the Euclidean norm of the assembled
    residual (constrained rows included) is at most ``tol``. The linearised
    treatments assemble and solve once. The iteration count of the standard
    scheme is the number of residual evaluations, so a step that starts at
    the converged solution reports one iteration.
    """
    treatment = Convection.parse(treatment)
    solver = solver or DirectSolver()
    start = time.perf_counter()
    if state.v_prev is None:
        scheme = scheme.startup()
    levels = Levels(state.v, state.p, state.a, state.v_prev, state.t)
    nv = problem.dofmap.n_velocity
    U = state.U

    if treatment.is_linear:
        system, _ = assemble_step_system(problem, levels, scheme, treatment, U)
        U = solver.solve(system)
        r = system.matrix @ U - system.rhs
        iterations, solves, resid = 1, 1, float(np.linalg.norm(r))
    else:
        iterations = solves = 0
        while True:
            system, resid = assemble_step_system(problem, levels, scheme, treatment, U, tangent)
            iterations += 1
            if not np.isfinite(resid):
                raise NewtonError("residual is not finite", iterations, resid)
            log.debug("t=%.6g newton %d residual %.3e", state.t + scheme.dt, iterations, resid)
            if resid <= tol:
                break
            if iterations >= max_iter:
                raise NewtonError(
                    f"Newton did not converge in {max_iter} iterations "
                    f"(residual {resid:.3e} > {tol:g}) at t={state.t + scheme.dt:.6g}",
                    iterations,
                    resid,
                )
            U = U + solver.solve(system)
            solves += 1

    v_next, p_next = U[:nv].copy(), U[nv:].copy()
    a_next = new_acceleration(scheme, v_next, state.v, state.v_prev, state.a)
    new = FlowState(v_next, p_next, a_next, state.v, state.t + scheme.dt, state.step + 1)
    return new, StepReport(iterations, resid, time.perf_counter() - start, solves)


Hook = Callable[[object, FlowState, StepReport], dict | None]


@dataclass
class RunResult:
    state: FlowState
    records: list[dict]
    reports: list[StepReport]
    error: Exception | None = None

    @property
    def mean_iterations(self) -> float:
        return float(np.mean([r.iterations for r in self.reports])) if self.reports else 0.0

    @property
    def wall_time(self) -> float:
        return float(sum(r.wall_time for r in self.reports))


def n_steps_for(t_end: float, dt: float, t0: float = 0.0) -> int:
    """Number of fixed steps covering ``[t0, t_end]``; ``dt`` must divide it."""
    n = (t_end - t0) / dt
    k = int(round(n))
    if abs(n - k) > 1e-9 * max(1.0, n):
        raise ValueError(f"dt={dt:g} does not divide the interval length {t_end - t0:g}")
    return k


def run_simulation(
    problem,
    scheme: TimeScheme,
    treatment,
    state: FlowState,
    t_end: float,
    hooks: Iterable[Hook] = (),
    solver: DirectSolver | None = None,
    on_record: Callable[[dict], None] | None = None,
    raise_errors: bool = True,
    tangent: str = "frozen",
) -> RunResult:
    """Fixed-step loop from ``state.t`` to ``t_end``.

    After every step each hook is called as ``hook(problem, state, report)``;
    the dicts they return are merged into one record per step, which is
    passed to ``on_record`` (e.g. a CSV writer) as soon as it exists. With
    ``raise_errors=False`` a failing step ends the run and the partial result
    is returned with ``error`` set.
    """
    solver = solver or DirectSolver()
    n = n_steps_for(t_end, scheme.dt, state.t)
    records, reports = [], []
    hooks = list(hooks)
    error = None
    for _ in range(n):
        try:
            state, report = advance(problem, state, scheme, treatment, solver, tangent=tangent)
        except Exception as exc:
            if raise_errors:
                raise
            log.error("step %d failed: %s", state.step + 1, exc)
            error = exc
            break
        reports.append(report)
        rec = {"t": state.t, "iters": report.iterations, "resid": report.residual}
        for hook in hooks:
            extra = hook(problem, state, report)
            if extra:
                rec.update(extra)
        records.append(rec)
        if on_record is not None:
            on_record(rec)
    return RunResult(state, records, reports, error)


def save_checkpoint(state: FlowState, path) -> None:
    """Binary dump of ``state``: a JSON header line followed by ``.npy`` blocks."""
    header = {
        "format": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "t": float(state.t).hex(),
        "step": int(state.step),
        "has_prev": state.v_prev is not None,
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header) + "\n").encode())
        for arr in (state.v, state.p, state.a):
            np.save(f, np.ascontiguousarray(arr, dtype=np.float64), allow_pickle=False)
        if state.v_prev is not None:
            np.save(f, np.ascontiguousarray(state.v_prev, dtype=np.float64), allow_pickle=False)


def load_checkpoint(path) -> FlowState:
    with open(Path(path), "rb") as f:
        try:
            header = json.loads(f.readline().decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: not a checkpoint file") from exc
        if header.get("format") != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        v, p, a = (np.load(f, allow_pickle=False) for _ in range(3))
        v_prev = np.load(f, allow_pickle=False) if header["has_prev"] else None
    return FlowState(v, p, a, v_prev, float.fromhex(header["t"]), int(header["step"]))

