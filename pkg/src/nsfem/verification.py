"""Manufactured solution, discrete error norms and observed convergence orders."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .basis import cell_tables, quadrature_rule

NORM_NAMES = ("L2_vx", "L2_vy", "H1_vx", "H1_vy", "L2_p")


def mms_fields(x, y, t):
    """Velocity ``(vx, vy)`` and pressure of the manufactured solution."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    s = np.sin(2.0 * t)
    vx = -np.cos(x) * np.sin(y) * s
    vy = np.sin(x) * np.cos(y) * s
    p = -0.25 * (np.cos(2.0 * x) + np.cos(2.0 * y)) * s**2
    return (vx, vy), p


def mms_velocity(x, y, t):
    return mms_fields(x, y, t)[0]


def mms_pressure(x, y, t):
    return mms_fields(x, y, t)[1]


def mms_acceleration(x, y, t):
    c = 2.0 * np.cos(2.0 * t)
    return -np.cos(x) * np.sin(y) * c, np.sin(x) * np.cos(y) * c


def mms_velocity_gradient(x, y, t):
    """``G[..., i, j] = d v_i / d x_j``."""
    s = np.sin(2.0 * t)
    sx, cx, sy, cy = np.sin(x), np.cos(x), np.sin(y), np.cos(y)
    G = np.empty(np.broadcast(x, y).shape + (2, 2))
    G[..., 0, 0] = sx * sy * s
    G[..., 0, 1] = -cx * cy * s
    G[..., 1, 0] = cx * cy * s
    G[..., 1, 1] = -sx * sy * s
    return G


def mms_divergence(x, y, t):
    G = mms_velocity_gradient(x, y, t)
    return G[..., 0, 0] + G[..., 1, 1]


def mms_body_force(x, y, t, rho: float = 1.0, mu: float = 0.02):
    """``g = rho dv/dt + rho (v.grad)v - mu lap v + grad p`` in closed form."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    s2 = np.sin(2.0 * t) ** 2
    (vx, vy), _ = mms_fields(x, y, t)
    ax, ay = mms_acceleration(x, y, t)
    # (v.grad)v = -grad p for this field
    cx, cy = -0.5 * np.sin(2.0 * x) * s2, -0.5 * np.sin(2.0 * y) * s2
    px, py = 0.5 * np.sin(2.0 * x) * s2, 0.5 * np.sin(2.0 * y) * s2
    # lap v = -2 v
    gx = rho * ax + rho * cx + 2.0 * mu * vx + px
    gy = rho * ay + rho * cy + 2.0 * mu * vy + py
    return gx, gy


@dataclass(frozen=True)
class ManufacturedSolution:
    """The manufactured solution bound to a density and viscosity."""

    rho: float = 1.0
    mu: float = 0.02

    def velocity(self, x, y, t):
        return mms_velocity(x, y, t)

    def pressure(self, x, y, t):
        return mms_pressure(x, y, t)

    def acceleration(self, x, y, t):
        return mms_acceleration(x, y, t)

    def gradient(self, x, y, t):
        return mms_velocity_gradient(x, y, t)

    def body_force(self, x, y, t):
        return mms_body_force(x, y, t, self.rho, self.mu)


def _error_tables(mesh):
    key = "q1" if mesh.kind == "q1" else "tri"
    pts, wts = quadrature_rule(key, 3) if key == "q1" else quadrature_rule(key)
    return cell_tables(mesh, pts, wts)


def error_norms(problem, state, t: float | None = None, exact: ManufacturedSolution | None = None, tables=None):
    """Norms of (numerical - exact) at ``t`` (defaults to ``state.t``).

    Uses a 3x3 Gauss rule on quadrilaterals and the 7-point rule on
    triangles. ``H1_*`` are full norms (L2 part plus gradient seminorm).
    """
    exact = exact or ManufacturedSolution()
    t = state.t if t is None else t
    tab = tables if tables is not None else _error_tables(problem.mesh)
    cells = problem.mesh.cells
    x, y = tab.xq[..., 0], tab.xq[..., 1]

    vloc = state.v.reshape(-1, 2)[cells]
    vh = np.einsum("qa,eac->eqc", tab.vel_val, vloc)
    gh = np.einsum("eqaj,eac->eqcj", tab.vel_grad, vloc)
    ph = np.einsum("qa,ea->eq", tab.pre_val, state.p[problem.pcells])

    vx, vy = exact.velocity(x, y, t)
    G = exact.gradient(x, y, t)
    p = exact.pressure(x, y, t)
    W = tab.wdet

    def integral(f):
        return float(np.sqrt(np.sum(W * f)))

    ex, ey = vh[..., 0] - vx, vh[..., 1] - vy
    dg = gh - G
    out = {
        "L2_vx": integral(ex**2),
        "L2_vy": integral(ey**2),
        "H1_vx": integral(ex**2 + dg[..., 0, 0] ** 2 + dg[..., 0, 1] ** 2),
        "H1_vy": integral(ey**2 + dg[..., 1, 0] ** 2 + dg[..., 1, 1] ** 2),
        "L2_p": integral((ph - p) ** 2),
    }
    return out


def convergence_order(errors, dts) -> float | dict:
    """Least-squares slope of ``log(error)`` against ``log(dt)``.

    ``errors`` is a sequence of numbers or of dicts keyed by norm name; in
    the latter case a dict of slopes is returned.
    """
    dts = np.asarray(dts, dtype=float)
    if len(dts) < 3 or len(errors) != len(dts):
        raise ValueError("need at least three (dt, error) pairs")
    if np.any(np.diff(dts) >= 0):
        raise ValueError("dt values must be strictly decreasing")
    if isinstance(errors[0], dict):
        return {k: convergence_order([e[k] for e in errors], dts) for k in errors[0]}
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    return float(np.polyfit(np.log(dts), np.log(e), 1)[0])


def slopes_above_floor(errors, dts, floor: dict, factor: float = 5.0) -> dict:
    """Slopes per norm using only points whose error exceeds ``factor * floor``.

    Norms with fewer than three admissible points map to ``None``.
    """
    out = {}
    for k in errors[0]:
        sel = [(d, e[k]) for d, e in zip(dts, errors) if e[k] > factor * floor[k]]
        if len(sel) < 3:
            out[k] = None
        else:
            out[k] = convergence_order([e for _, e in sel], [d for d, _ in sel])
    return out


def write_convergence_csv(path, dts, errors, slopes=None) -> None:
    """Rows ``dt, L2_vx, L2_vy, H1_vx, H1_vy, L2_p`` and a trailing slopes row."""
    slopes = slopes if slopes is not None else convergence_order(list(errors), dts)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("dt",) + NORM_NAMES)
        for dt, e in zip(dts, errors):
            w.writerow([repr(float(dt))] + [repr(float(e[k])) for k in NORM_NAMES])
        w.writerow(["slope"] + ["" if slopes.get(k) is None else f"{slopes[k]:.4f}" for k in NORM_NAMES])
