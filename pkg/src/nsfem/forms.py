"""Element forms of the stabilised incompressible Navier-Stokes equations.

Unknowns of a step are ``U = (v_{n+1}, p_{n+1})``. Velocity enters every term
at the alpha-level ``v_f = af v_{n+1} + (1 - af) v_n`` (pressure likewise),
acceleration at ``a_m``. The convective term is selected by
:class:`Convection`:

* ``STANDARD``      ``(v_f . grad) v_f``, solved with Newton iterations
* ``EXTRAPOLATED1`` ``(v_n . grad) v_f``
* ``EXTRAPOLATED2`` ``(v~ . grad) v_f`` with ``v~ = af (2 v_n - v_{n-1}) + (1 - af) v_n``
* ``PROPOSED``      ``(v_n . grad) v_f + (v_f . grad) v_n - (v_n . grad) v_n``

The derivative of every variant is written with two ingredients: an
advective velocity ``u`` acting on the unknown and a reaction tensor ``K``
(``dC[dv] = (u . grad) dv + K dv``), which keeps the Jacobian of all four
treatments in one code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .sparse import SparseSystem, apply_dirichlet_rows, assemble_matrix, assemble_vector
from .timeint import TimeScheme, jacobian_coefficients, new_acceleration


class Convection(str, Enum):
    STANDARD = "standard"
    EXTRAPOLATED1 = "extrapolated1"
    EXTRAPOLATED2 = "extrapolated2"
    PROPOSED = "proposed"

    @property
    def is_linear(self) -> bool:
        return self is not Convection.STANDARD

    @classmethod
    def parse(cls, name) -> "Convection":
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("-", "").replace("_", "")
        aliases = {"extrapolated": "extrapolated2", "newton": "standard", "linearized": "proposed"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class MaterialParams:
    rho: float
    mu: float
    body_force: Callable | None = None

    def __post_init__(self):
        if not (self.rho > 0 and self.mu > 0):
            raise ValueError("density and viscosity must be positive")

    @property
    def nu(self) -> float:
        return self.mu / self.rho


@dataclass(frozen=True)
class StabilizationConfig:
    enabled: bool = True


def metric_tensor(h) -> np.ndarray:
    """``G = (4 / h^2) I`` for each entry of ``h``."""
    h = np.asarray(h, dtype=float)
    return (4.0 / h**2)[..., None, None] * np.eye(2)


def compute_tau(v, nu: float, h) -> np.ndarray:
    """SUPG/PSPG parameter ``[v.Gv + 4 nu^2 G:G]^(-1/2)`` with ``G = 4/h^2 I``."""
    v = np.asarray(v, dtype=float)
    G = metric_tensor(h)
    vGv = np.einsum("...i,...ij,...j->...", v, G, v)
    GG = np.einsum("...ij,...ij->...", G, G)
    return 1.0 / np.sqrt(vGv + 4.0 * nu**2 * GG)


def extrapolated_velocity(v_n, v_prev, alpha_f: float, order: int):
    """Extrapolated convection velocity at ``n + alpha_f``."""
    if order == 1:
        v_star = v_n
    elif order == 2:
        if v_prev is None:
            raise ValueError("second-order extrapolation needs v_{n-1}")
        v_star = 2.0 * v_n - v_prev
    else:
        raise ValueError("order must be 1 or 2")
    return alpha_f * v_star + (1.0 - alpha_f) * v_n


def _dot_grad(grad, v):
    # (v . grad) w  with grad[..., i, j] = d w_i / d x_j
    return np.einsum("...ij,...j->...i", grad, v)


def convection_strong(treatment, v_alpha, v_n, v_tilde, grad_alpha, grad_n=None):
    """Pointwise convective term of the strong momentum residual."""
    treatment = Convection.parse(treatment)
    if treatment is Convection.STANDARD:
        return _dot_grad(grad_alpha, v_alpha)
    if treatment is Convection.PROPOSED:
        return (
            _dot_grad(grad_alpha, v_n)
            + _dot_grad(grad_n, v_alpha)
            - _dot_grad(grad_n, v_n)
        )
    return _dot_grad(grad_alpha, v_tilde)


@dataclass
class Levels:
    """Nodal fields needed to form one step (global dof layout)."""

    v_n: np.ndarray
    p_n: np.ndarray
    a_n: np.ndarray
    v_prev: np.ndarray | None
    t_n: float


def _qsum(X, Y):
    """``sum_q X[e, q, I] Y[e, q, J] -> [e, I, J]`` as one batched matmul.

    A leading axis of length one on ``Y`` is broadcast over cells.
    """
    ne, nq = X.shape[:2]
    if Y.shape[0] != ne:
        Y = np.broadcast_to(Y, (ne,) + Y.shape[1:])
    out = X.reshape(ne, nq, -1).transpose(0, 2, 1) @ Y.reshape(ne, nq, -1)
    return out.reshape((ne,) + X.shape[2:] + Y.shape[2:])


@dataclass
class GalerkinBlocks:
    """Iterate-independent element matrices and reshaped basis tables."""

    mass: np.ndarray  # (e, b, a)  int N_b N_a
    stiff: np.ndarray  # (e, b, a)  int grad N_b . grad N_a
    div: np.ndarray  # (e, b, c, a)  int Np_b dN_a/dx_c
    dN_t: np.ndarray  # (e, q * 2, a) velocity gradients, j fastest
    lapN: np.ndarray | None  # (e, q, a)


def galerkin_blocks(tables) -> GalerkinBlocks:
    N, dN, W = tables.vel_val, tables.vel_grad, tables.wdet
    ne, nq, nv, _ = dN.shape
    WN = W[..., None] * N
    WdN = W[..., None, None] * dN
    stiff = _qsum(WdN.transpose(0, 1, 3, 2).reshape(ne, 2 * nq, nv), dN.transpose(0, 1, 3, 2).reshape(ne, 2 * nq, nv))
    div = _qsum(W[..., None] * tables.pre_val, dN.transpose(0, 1, 3, 2))
    lapN = None
    if tables.vel_hess is not None:
        lapN = tables.vel_hess[..., 0, 0] + tables.vel_hess[..., 1, 1]
    return GalerkinBlocks(
        mass=_qsum(WN, N[None]),
        stiff=stiff,
        div=div,
        dN_t=np.ascontiguousarray(dN.transpose(0, 1, 3, 2).reshape(ne, 2 * nq, nv)),
        lapN=lapN,
    )


def _vector_field(fn, xq, t):
    """``fn(x, y, t)`` at points ``xq[..., 2]`` as an array of shape ``xq.shape``."""
    fx, fy = fn(xq[..., 0], xq[..., 1], t)
    shape = xq.shape[:-1]
    return np.stack([np.broadcast_to(np.asarray(fx, dtype=float), shape), np.broadcast_to(np.asarray(fy, dtype=float), shape)], -1)


def element_forms(problem, U, levels: Levels, scheme: TimeScheme, treatment, jacobian=True, tangent="frozen"):
    """Local residuals ``(ne, nloc)`` and Jacobians ``(ne, nloc, nloc)``.

    ``problem`` is a :class:`nsfem.problem.FlowProblem`. For the linearised
    treatments the Jacobian is the exact derivative of the (affine)
    residual. For the standard scheme ``tangent="frozen"`` holds ``tau`` and
    the SUPG weight fixed at the iterate; ``tangent="exact"`` differentiates
    them as well. Local ordering is x-velocity at every node, then
    y-velocity, then pressure.
    """
    treatment = Convection.parse(treatment)
    mat = problem.material
    rho, mu = mat.rho, mat.mu
    tab = problem.tables
    blk = problem.blocks
    stab = problem.stabilization.enabled
    ne, nq, nv, _ = tab.vel_grad.shape
    npr = tab.pre_val.shape[1]
    nvel = problem.dofmap.n_velocity

    am_, af, _ = scheme.params
    cm, cs = jacobian_coefficients(scheme)
    v_next, p_next = U[:nvel], U[nvel:]
    a_next = new_acceleration(scheme, v_next, levels.v_n, levels.v_prev, levels.a_n)
    v_f = af * v_next + (1.0 - af) * levels.v_n
    a_m = am_ * a_next + (1.0 - am_) * levels.a_n
    p_f = af * p_next + (1.0 - af) * levels.p_n
    t_f = levels.t_n + af * scheme.dt

    N, W = tab.vel_val, tab.wdet
    dN, dNp = tab.vel_grad, tab.pre_grad
    cells = problem.mesh.cells

    def nodal(vec):
        return vec.reshape(-1, 2)[cells]  # (e, a, c)

    def at_q(loc):
        grad = (blk.dN_t @ loc).reshape(ne, nq, 2, 2).transpose(0, 1, 3, 2)
        return N @ loc, grad  # (e, q, c), (e, q, c, j)

    def along(w):
        return (dN @ w[..., None])[..., 0]  # (w . grad) N_a at q

    vloc = nodal(v_f)
    vq, Gq = at_q(vloc)
    amq = N @ nodal(a_m)
    ploc = p_f[problem.pcells]
    gradp = (dNp.transpose(0, 1, 3, 2) @ ploc[:, None, :, None])[..., 0]
    vflat = vloc.transpose(0, 2, 1).reshape(ne, 2 * nv)

    if treatment is Convection.STANDARD:
        u, K, us = vq, Gq, vq
        C = _dot_grad(Gq, vq)
    else:
        vnq, Gnq = at_q(nodal(levels.v_n))
        us = vnq
        if treatment is Convection.PROPOSED:
            u, K = vnq, Gnq
            C = convection_strong(treatment, vq, vnq, None, Gq, Gnq)
        else:
            order = 2 if treatment is Convection.EXTRAPOLATED2 and levels.v_prev is not None else 1
            u = N @ nodal(extrapolated_velocity(levels.v_n, levels.v_prev, af, order))
            K = None
            C = _dot_grad(Gq, u)

    if mat.body_force is not None:
        g = _vector_field(mat.body_force, tab.xq, t_f)
    else:
        g = np.zeros_like(vq)

    # Galerkin residual
    force = rho * amq + rho * C - g
    WN = W[..., None] * N
    Rv = (
        _qsum(force, WN).reshape(ne, 2 * nv)
        + mu * (blk.stiff @ vloc).transpose(0, 2, 1).reshape(ne, 2 * nv)
        - (ploc[:, None, :] @ blk.div.reshape(ne, npr, 2 * nv))[:, 0]
    )
    Rp = (blk.div.reshape(ne, npr, 2 * nv) @ vflat[..., None])[..., 0]

    if stab:
        tau = compute_tau(us, mat.nu, problem.h[:, None])
        lap = 0.0
        if blk.lapN is not None:
            lap = blk.lapN @ vloc
        r = force - mu * lap + gradp
        usN = along(us)
        S = tau[..., None] * usN
        WS = W[..., None] * S
        Wtr = W * tau / rho
        dNp_r = (dNp @ r[..., None])[..., 0]  # (e, q, b)
        Rv += _qsum(r, WS).reshape(ne, 2 * nv)
        Rp += np.einsum("eq,eqb->eb", Wtr, dNp_r)

    # continuity tested with -q so the Stokes part of the matrix is symmetric
    R = np.concatenate([Rv, -Rp], axis=1)
    if not jacobian:
        return R, None

    nloc = 2 * nv + npr
    J = np.zeros((ne, nloc, nloc))
    L = rho * cm * N + rho * cs * along(u)
    if stab and blk.lapN is not None:
        L = L - mu * cs * blk.lapN
    # component-diagonal velocity block
    A = _qsum(WN, L) + mu * cs * blk.stiff
    if stab:
        A += _qsum(WS, L)
    Jvv = np.zeros((ne, 2, nv, 2, nv))
    Jvv[:, 0, :, 0, :] = A
    Jvv[:, 1, :, 1, :] = A
    if K is not None:
        Wtest = WN + WS if stab else WN
        KN = K[..., None] * N[None, :, None, None, :]
        Jvv += rho * cs * _qsum(Wtest, KN).transpose(0, 2, 1, 3, 4)
    Jvp = -cs * blk.div.transpose(0, 2, 3, 1)
    Jpv = cs * blk.div
    Jpp = np.zeros((ne, npr, npr))
    if stab:
        Jvp = Jvp + cs * _qsum(WS, dNp).transpose(0, 3, 1, 2)
        WdNp = Wtr[..., None, None] * dNp
        Jpv = Jpv + _qsum(WdNp, L)
        if K is not None:
            Jpv += rho * cs * _qsum(WdNp @ K, N[None])
        Jpp = cs * _qsum(
            WdNp.transpose(0, 1, 3, 2).reshape(ne, 2 * nq, npr),
            dNp.transpose(0, 1, 3, 2).reshape(ne, 2 * nq, npr),
        )
        if treatment is Convection.STANDARD and tangent == "exact":
            # d/dv of the SUPG weight tau (v_f . grad w) and of tau itself
            dtau = -4.0 * tau**3 / problem.h[:, None] ** 2  # times v_f . dv
            T = tau[..., None, None] * dN + dtau[..., None, None] * usN[..., None] * us[:, :, None, :]
            Jvv += cs * _qsum(W[..., None] * r, T[..., None] * N[None, :, None, None, :])
            X = (W * dtau / rho)[..., None] * dNp_r
            Jpv += cs * _qsum(X, us[..., None] * N[None, :, None, :])
    J[:, : 2 * nv, : 2 * nv] = Jvv.reshape(ne, 2 * nv, 2 * nv)
    J[:, : 2 * nv, 2 * nv :] = Jvp.reshape(ne, 2 * nv, npr)
    J[:, 2 * nv :, : 2 * nv] = -Jpv.reshape(ne, npr, 2 * nv)
    J[:, 2 * nv :, 2 * nv :] = -Jpp
    return R, J


def body_and_traction_rhs(problem, t: float) -> np.ndarray:
    """Global load vector ``int w.g dOmega + int_{Gamma_N} w.t dGamma`` at ``t``."""
    tab = problem.tables
    n = problem.dofmap.n_dofs
    out = np.zeros(n)
    cells = problem.mesh.cells
    if problem.material.body_force is not None:
        g = _vector_field(problem.material.body_force, tab.xq, t)
        loc = np.einsum("eq,qa,eqc->eca", tab.wdet, tab.vel_val, g)
        for c in range(2):
            out[: problem.dofmap.n_velocity] += np.bincount(
                (2 * cells + c).ravel(), weights=loc[:, c].ravel(), minlength=problem.dofmap.n_velocity
            )
    out += traction_rhs(problem, t)
    return out


def traction_rhs(problem, t: float) -> np.ndarray:
    """Neumann contribution ``int_{Gamma_N} w . t_bar``; zero for traction-free patches."""
    n = problem.dofmap.n_dofs
    out = np.zeros(n)
    for bc in problem.bcs:
        if bc.kind != "traction" or bc.value is None:
            continue
        et = problem.edge_tables(bc.patch)
        tr = _vector_field(bc.value, et.xq, t)
        loc = np.einsum("eq,eqa,eqc->eca", et.wlen, et.vel_val, tr)
        nodes = problem.mesh.cells[et.cells]
        for c in range(2):
            out += np.bincount((2 * nodes + c).ravel(), weights=loc[:, c].ravel(), minlength=n)
    return out


def global_residual(problem, U, levels: Levels, scheme: TimeScheme, treatment) -> np.ndarray:
    """Assembled residual of the step equations (no Dirichlet treatment)."""
    R_loc, _ = element_forms(problem, U, levels, scheme, treatment, jacobian=False)
    R = assemble_vector(problem.pattern.cell_dofs, R_loc, problem.n_dofs)
    t_f = levels.t_n + scheme.alpha_f * scheme.dt
    return R - traction_rhs(problem, t_f)


def assemble_step_system(problem, levels: Levels, scheme: TimeScheme, treatment, iterate, tangent="frozen"):
    """Linear system for one step and the residual norm at ``iterate``.

    For the standard scheme the system is the Newton correction
    ``J dU = -R(iterate)``. For the linearised treatments the residual is
    affine in ``U`` and the returned system ``J U = J iterate - R(iterate)``
    yields ``(v_{n+1}, p_{n+1})`` directly. Constrained rows are identity
    rows carrying the prescribed values at ``t_{n+1}``.
    """
    treatment = Convection.parse(treatment)
    pattern = problem.pattern
    R_loc, J_loc = element_forms(problem, iterate, levels, scheme, treatment, tangent=tangent)
    R = assemble_vector(pattern.cell_dofs, R_loc, problem.n_dofs)
    R -= traction_rhs(problem, levels.t_n + scheme.alpha_f * scheme.dt)
    A = assemble_matrix(pattern, J_loc)
    dofs, values = problem.dofmap.dirichlet_values(levels.t_n + scheme.dt)
    R[dofs] = iterate[dofs] - values
    resid = float(np.linalg.norm(R))
    if treatment.is_linear:
        rhs = A @ iterate - R
        apply_dirichlet_rows(A, rhs, dofs, values)
    else:
        rhs = -R
        apply_dirichlet_rows(A, rhs, dofs, -R[dofs])
    return SparseSystem(A, rhs), resid
