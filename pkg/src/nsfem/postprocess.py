"""Boundary forces, lift/drag coefficients, shedding statistics and file output."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import P2_EDGES, Q1_EDGES

TIMESERIES_COLUMNS = ("t", "Fx", "Fy", "CD", "CL", "iters", "resid")
VTK_CELL_TYPES = {"q1": 9, "p2p1": 22}
# local P2 node order -> VTK quadratic triangle (edge midpoints 01, 12, 20)
P2_TO_VTK = (0, 1, 2, 5, 3, 4)


class InsufficientPeriodsError(ValueError):
    """The analysed window holds too few shedding periods."""


def boundary_force(problem, state, patch: str) -> tuple[float, float]:
    """``int_patch (mu grad v - p I) . n`` with ``n`` the fluid outward normal.

    The force the fluid exerts on a body bounded by ``patch`` is the
    negative of this value.
    """
    if patch not in problem.mesh.patches or len(problem.mesh.patches[patch]) == 0:
        raise ValueError(f"patch {patch!r} is empty or missing")
    et = problem.edge_tables(patch)
    mu = problem.material.mu
    cells = problem.mesh.cells[et.cells]
    vloc = state.v.reshape(-1, 2)[cells]
    grad = np.einsum("eqaj,eac->eqcj", et.vel_grad, vloc)
    ploc = state.p[problem.pcells[et.cells]]
    p = np.einsum("eqa,ea->eq", et.pre_val, ploc)
    traction = mu * np.einsum("eqcj,eqj->eqc", grad, et.normal) - p[..., None] * et.normal
    F = np.einsum("eq,eqc->c", et.wlen, traction)
    return float(F[0]), float(F[1])


def force_on_body(problem, state, patch: str) -> tuple[float, float]:
    Fx, Fy = boundary_force(problem, state, patch)
    return -Fx, -Fy


def _coefficient(F, rho: float, v_inf: float, D: float):
    if not (v_inf > 0 and D > 0):
        raise ValueError("v_inf and D must be positive")
    return 2.0 * np.asarray(F, dtype=float) / (rho * v_inf**2 * D)


def lift_coefficient(Fy, rho: float, v_inf: float, D: float):
    """``C_L = 2 Fy / (rho v_inf^2 D)``."""
    c = _coefficient(Fy, rho, v_inf, D)
    return float(c) if c.ndim == 0 else c


def drag_coefficient(Fx, rho: float, v_inf: float, D: float):
    c = _coefficient(Fx, rho, v_inf, D)
    return float(c) if c.ndim == 0 else c


def _window(t, y, window_fraction: float):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("time and signal must be 1-D arrays of equal length")
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window_fraction must lie in (0, 1]")
    t0 = t[-1] - window_fraction * (t[-1] - t[0])
    sel = t >= t0
    return t[sel], y[sel]


def upward_crossings(t, y) -> np.ndarray:
    """Linearly interpolated times at which ``y - mean(y)`` crosses zero upwards."""
    z = y - y.mean()
    k = np.nonzero((z[:-1] < 0.0) & (z[1:] >= 0.0))[0]
    return t[k] - z[k] * (t[k + 1] - t[k]) / (z[k + 1] - z[k])


def _periods(t, y, window_fraction: float, min_periods: int):
    tw, yw = _window(t, y, window_fraction)
    tc = upward_crossings(tw, yw)
    if len(tc) < min_periods + 1:
        raise InsufficientPeriodsError(
            f"found {max(len(tc) - 1, 0)} shedding periods in the last "
            f"{window_fraction:.0%} of the series; need {min_periods}"
        )
    return tw, yw, tc


def strouhal(t, lift, D: float = 1.0, v_inf: float = 1.0, window_fraction: float = 0.25, min_periods: int = 5) -> float:
    """``St = D / (v_inf T)`` from the mean period of upward zero crossings."""
    _, _, tc = _periods(t, lift, window_fraction, min_periods)
    period = (tc[-1] - tc[0]) / (len(tc) - 1)
    return float(D / (v_inf * period))


def amplitude(t, lift, window_fraction: float = 0.25, min_periods: int = 5) -> float:
    """Half the mean peak-to-trough excursion over complete periods."""
    tw, yw, tc = _periods(t, lift, window_fraction, min_periods)
    swings = []
    for a, b in zip(tc[:-1], tc[1:]):
        seg = yw[(tw >= a) & (tw <= b)]
        if seg.size:
            swings.append(seg.max() - seg.min())
    return float(0.5 * np.mean(swings))


def _nodal_pressure(problem, state) -> np.ndarray:
    """Pressure at every node; P2 midpoints take the mean of their edge ends."""
    mesh = problem.mesh
    out = np.zeros(mesh.n_nodes)
    pn = mesh.pressure_nodes
    out[pn] = state.p[problem.dofmap.pressure_index[pn]]
    if mesh.kind == "p2p1":
        cells = mesh.cells
        for mid, (i, j) in zip(range(3, 6), ((1, 2), (2, 0), (0, 1))):
            out[cells[:, mid]] = 0.5 * (out[cells[:, i]] + out[cells[:, j]])
    return out


def pressure_jump_ratio(problem, state) -> float:
    """Largest nodal pressure difference along an interior edge over the field range.

    A smooth field on a fine mesh gives a small ratio; checkerboard modes
    give ratios near one.
    """
    mesh = problem.mesh
    edges = Q1_EDGES if mesh.kind == "q1" else np.asarray(P2_EDGES)[:, :2]
    vc = mesh.vertex_cells
    pairs = np.concatenate([vc[:, list(e)] for e in np.asarray(edges)])
    keys = np.sort(pairs, axis=1)
    uniq, counts = np.unique(keys, axis=0, return_counts=True)
    interior = uniq[counts == 2]
    p = state.p[problem.dofmap.pressure_index]
    span = p.max() - p.min()
    if span == 0.0 or len(interior) == 0:
        return 0.0
    return float(np.abs(p[interior[:, 0]] - p[interior[:, 1]]).max() / span)


def write_fields(problem, state, path) -> None:
    """Legacy-VTK ASCII unstructured grid with point velocity and pressure."""
    mesh = problem.mesh
    cells = mesh.cells
    if mesh.kind == "p2p1":
        cells = cells[:, list(P2_TO_VTK)]
    nloc = cells.shape[1]
    v = state.v.reshape(-1, 2)
    p = _nodal_pressure(problem, state)
    lines = [
        "# vtk DataFile Version 3.0",
        f"nsfem t={state.t:.17g}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.nodes]
    lines.append(f"CELLS {len(cells)} {len(cells) * (nloc + 1)}")
    lines += [f"{nloc} " + " ".join(map(str, c)) for c in cells.tolist()]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(VTK_CELL_TYPES[mesh.kind])] * len(cells)
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    lines.append("VECTORS velocity double")
    lines += [f"{a:.17g} {b:.17g} 0" for a, b in v]
    lines.append("SCALARS pressure double 1")
    lines.append("LOOKUP_TABLE default")
    lines += [f"{x:.17g}" for x in p]
    Path(path).write_text("\n".join(lines) + "\n")


class TimeseriesWriter:
    """Appends one CSV row per step and flushes, so partial runs keep their data."""

    def __init__(self, path, columns=TIMESERIES_COLUMNS):
        self.columns = tuple(columns)
        self._file = open(path, "w", newline="")
        self._writer = csv.writer(self._file)
        self._writer.writerow(self.columns)
        self._file.flush()

    def __call__(self, record: dict) -> None:
        self._writer.writerow([_fmt(record.get(c, "")) for c in self.columns])
        self._file.flush()

    def close(self) -> None:
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def write_timeseries(samples, path, columns=TIMESERIES_COLUMNS) -> None:
    with TimeseriesWriter(path, columns) as w:
        for s in samples:
            w(s)


def read_timeseries(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) if r[k] != "" else np.nan for r in rows]) for k in rows[0]}


def force_hook(patch: str, rho: float, v_inf: float, D: float):
    """Step hook recording body forces and coefficients on ``patch``."""

    def hook(problem, state, report):
        Fx, Fy = force_on_body(problem, state, patch)
        return {
            "Fx": Fx,
            "Fy": Fy,
            "CD": drag_coefficient(Fx, rho, v_inf, D),
            "CL": lift_coefficient(Fy, rho, v_inf, D),
        }

    return hook
