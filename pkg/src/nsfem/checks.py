"""Fast invariant suite run by ``nsfem check`` (tiny meshes, a few seconds)."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import eval_shape
from .forms import Convection, Levels, MaterialParams, compute_tau, element_forms
from .mesh import BoundaryCondition, Mesh, cylinder_channel_q1, generate_unit_square_q1
from .postprocess import boundary_force
from .problem import FlowProblem
from .sparse import DirectSolver, assemble_matrix, assemble_vector
from .stepper import FlowState, advance
from .timeint import TimeScheme, ga_parameters
from .verification import mms_body_force, mms_divergence, mms_fields


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _distorted_square(n: int, rng, amount: float = 0.2) -> Mesh:
    base = generate_unit_square_q1(n)
    nodes = base.nodes.copy()
    interior = np.all((nodes > 1e-12) & (nodes < 1 - 1e-12), axis=1)
    nodes[interior] += amount / n * rng.uniform(-1, 1, size=(interior.sum(), 2))
    return Mesh("q1", nodes, base.cells, dict(base.patches))


def check_partition_of_unity(rng) -> tuple[bool, str]:
    worst = 0.0
    for kind, lo in (("Q1", -1.0), ("P1", 0.0), ("P2", 0.0)):
        pts = rng.uniform(lo, 1.0, size=(50, 2))
        if lo == 0.0:
            pts = pts[pts.sum(1) <= 1.0]
        sh = eval_shape(kind, pts)
        worst = max(worst, np.abs(sh.values.sum(1) - 1).max(), np.abs(sh.grads_ref.sum(1)).max())
    return worst <= 1e-13, f"max deviation {worst:.2e}"


def check_patch_test(rng) -> tuple[bool, str]:
    """Couette flow ``v = (y, 0)``, constant pressure, is reproduced on a distorted mesh."""
    mesh = _distorted_square(3, rng)
    exact = lambda x, y, t: (np.asarray(y, dtype=float), np.zeros_like(np.asarray(x, dtype=float)))  # noqa: E731
    bcs = [BoundaryCondition(p, "dirichlet", exact) for p in ("left", "right", "bottom", "top")]
    problem = FlowProblem(mesh, MaterialParams(1.0, 0.05), bcs)
    problem.dofmap.pin_pressure(0, lambda x, y, t: 0.3)
    nv = problem.dofmap.n_velocity
    U = problem.interpolate(exact, lambda x, y, t: 0.3 + 0 * x)
    worst = 0.0
    solver = DirectSolver()
    for conv in Convection:
        st = FlowState(U[:nv].copy(), U[nv:].copy(), np.zeros(nv), U[:nv].copy(), 0.0, 1)
        new, _ = advance(problem, st, TimeScheme("ga", 0.1, 0.5), conv, solver)
        worst = max(worst, np.abs(new.U - U).max())
    return worst <= 1e-10, f"max nodal error {worst:.2e}"


def check_closed_patch_force(rng) -> tuple[bool, str]:
    p0 = float(rng.uniform(0.5, 2.0))
    worst = 0.0
    square = _distorted_square(4, rng)
    cyl = cylinder_channel_q1(n_box=8, n_radial=4, n_upstream=3, n_downstream=6, n_lateral=3)
    for mesh, patches in ((square, ("left", "right", "bottom", "top")), (cyl, ("cylinder",))):
        problem = FlowProblem(mesh, MaterialParams(1.0, 0.01))
        nv = problem.dofmap.n_velocity
        state = FlowState(np.zeros(nv), np.full(problem.dofmap.n_pressure, p0), np.zeros(nv))
        F = np.sum([boundary_force(problem, state, p) for p in patches], axis=0)
        worst = max(worst, float(np.abs(F).max()))
    return worst <= 1e-12, f"|F| = {worst:.2e} for p0 = {p0:.3f}"


def check_tau(rng) -> tuple[bool, str]:
    t0 = compute_tau(np.zeros(2), 0.02, 1.0)
    expected = 1.0 / np.sqrt(4.0 * 0.02**2 * 32.0)
    t_adv = compute_tau(np.array([1.0, 0.0]), 1e-12, 1.0)
    ratio = compute_tau(np.zeros(2), 0.02, 2.0) / t0
    ok = abs(t0 - expected) <= 1e-12 * expected and abs(t_adv - 0.5) <= 1e-9 and abs(ratio - 4.0) <= 1e-12
    return ok, f"tau(0, 0.02, 1) = {float(t0):.6f}, tau(|v|=1) = {float(t_adv):.6f}, h-doubling ratio {float(ratio):.6f}"


def check_ga_parameters(rng) -> tuple[bool, str]:
    expected = {0.0: (1.5, 1.0, 1.0), 0.5: (5.0 / 6.0, 2.0 / 3.0, 2.0 / 3.0), 1.0: (0.5, 0.5, 0.5)}
    worst = max(np.abs(np.subtract(ga_parameters(r), v)).max() for r, v in expected.items())
    return worst <= 1e-15, f"max deviation {worst:.1e}"


def check_mms_divergence(rng) -> tuple[bool, str]:
    x, y, t = rng.uniform(0, 1, (3, 100)) * np.array([[1.0], [1.0], [10.0]])
    worst = float(np.abs(mms_divergence(x, y, t)).max())
    return worst <= 1e-14, f"max |div v| {worst:.1e}"


def momentum_operator_fd(x, y, t, rho, mu, h=1e-4):
    """``rho dv/dt + rho (v.grad)v - mu lap v + grad p`` by central differences."""

    def v(x, y, t):
        return np.stack(mms_fields(x, y, t)[0])

    def p(x, y, t):
        return mms_fields(x, y, t)[1]

    dvdt = (v(x, y, t + h) - v(x, y, t - h)) / (2 * h)
    dvdx = (v(x + h, y, t) - v(x - h, y, t)) / (2 * h)
    dvdy = (v(x, y + h, t) - v(x, y - h, t)) / (2 * h)
    lap = (v(x + h, y, t) + v(x - h, y, t) + v(x, y + h, t) + v(x, y - h, t) - 4 * v(x, y, t)) / h**2
    dpdx = (p(x + h, y, t) - p(x - h, y, t)) / (2 * h)
    dpdy = (p(x, y + h, t) - p(x, y - h, t)) / (2 * h)
    vx, vy = v(x, y, t)
    conv = vx * dvdx + vy * dvdy
    return rho * dvdt + rho * conv - mu * lap + np.stack([dpdx, dpdy])


def check_body_force(rng) -> tuple[bool, str]:
    x, y = rng.uniform(0, 1, (2, 50))
    t = rng.uniform(0.1, 5.0, 50)
    rho, mu = 1.3, 0.02
    g = np.stack(mms_body_force(x, y, t, rho, mu))
    fd = momentum_operator_fd(x, y, t, rho, mu)
    rel = float(np.linalg.norm(g - fd, axis=0).max() / np.linalg.norm(g, axis=0).max())
    return rel <= 1e-6, f"max relative error {rel:.2e}"


def check_jacobian(rng) -> tuple[bool, str]:
    """Exact Newton tangent vs central differences on a 2x2 stabilised mesh."""
    problem = FlowProblem(generate_unit_square_q1(2), MaterialParams(1.0, 0.02))
    n, nv = problem.n_dofs, problem.dofmap.n_velocity
    lv = Levels(rng.normal(size=nv), rng.normal(size=n - nv), rng.normal(size=nv), rng.normal(size=nv), 0.0)
    U = rng.normal(size=n)
    scheme = TimeScheme("ga", 0.1, 0.0)
    cd = problem.pattern.cell_dofs

    def residual(V):
        return assemble_vector(cd, element_forms(problem, V, lv, scheme, "standard", jacobian=False)[0], n)

    _, J = element_forms(problem, U, lv, scheme, "standard", tangent="exact")
    J = assemble_matrix(problem.pattern, J).toarray()
    eps = 1e-6
    fd = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = eps
        fd[:, k] = (residual(U + e) - residual(U - e)) / (2 * eps)
    rel = float(np.abs(J - fd).max() / np.abs(fd).max())
    return rel <= 1e-5, f"max relative entry error {rel:.2e}"


CHECKS: dict[str, Callable] = {
    "partition of unity": check_partition_of_unity,
    "patch test": check_patch_test,
    "closed-patch zero force": check_closed_patch_force,
    "tau point values": check_tau,
    "GA parameters": check_ga_parameters,
    "MMS divergence-free": check_mms_divergence,
    "body-force FD oracle": check_body_force,
    "Jacobian vs finite differences": check_jacobian,
}


def run_checks(seed: int = 0) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS.items():
        rng = np.random.default_rng(seed)
        start = time.perf_counter()
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crash is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - start))
    return out
