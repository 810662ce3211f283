"""Command line: ``nsfem run|mms|cylinder <config>`` and ``nsfem check``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 acceptance-guard failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .cases import CylinderSetup, cylinder_mesh, cylinder_problem, mms_problem
from .config import CaseConfig, ConfigError, parse_config, parse_scheme_token, write_config
from .forms import MaterialParams, StabilizationConfig
from .mesh import BoundaryCondition, MeshError, generate_unit_square_p2p1, generate_unit_square_q1, load_mesh
from .postprocess import TIMESERIES_COLUMNS, TimeseriesWriter, write_fields
from .problem import FlowProblem
from .sparse import DirectSolver, SingularSystemError
from .stepper import NewtonError, initial_state, run_simulation
from .studies import MMS_T_END, cylinder_run, fitted_dt, floor_errors, mms_run
from .timeint import TimeScheme
from .verification import NORM_NAMES, convergence_order, error_norms, slopes_above_floor, write_convergence_csv

log = logging.getLogger("nsfem")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_GUARD = 0, 2, 3, 4


class GuardFailure(RuntimeError):
    """A configured acceptance bound was not met."""


def _output_dir(cfg: CaseConfig, config_path: Path, override: str | None) -> Path:
    out = Path(override) if override else Path(cfg.base_dir) / f"{config_path.stem}_out"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(out: Path, report: dict) -> None:
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def _scheme(cfg: CaseConfig) -> TimeScheme:
    s = cfg.scheme
    return TimeScheme(s.variant, s.dt, s.rho_inf)


def _load_mesh(cfg: CaseConfig):
    try:
        return load_mesh(cfg.mesh_path())
    except OSError as exc:
        raise ConfigError(f"mesh.file: {exc}") from None
    except MeshError as exc:
        raise ConfigError(f"mesh.file: {exc}") from None


def _constant_bc(bc):
    vx, vy = bc.value

    def value(x, y, t):
        s = 1.0 if bc.ramp_time <= 0 else min(max(t / bc.ramp_time, 0.0), 1.0)
        shape = np.shape(np.asarray(x))
        return np.full(shape, s * vx), np.full(shape, s * vy)

    return value


def build_problem(cfg: CaseConfig) -> FlowProblem:
    """The discretised problem described by ``cfg``."""
    stab = StabilizationConfig(cfg.stabilized)
    if cfg.kind == "mms":
        if cfg.mesh.source == "file":
            raise ConfigError("mesh.source: the mms case generates its own unit-square mesh")
        return mms_problem(cfg.mesh.n, cfg.mesh.element, cfg.material.rho, cfg.material.mu)
    if cfg.kind == "cylinder":
        mesh = _load_mesh(cfg) if cfg.mesh.source == "file" else cylinder_mesh()
        return cylinder_problem(_cylinder_setup(cfg), mesh, stab)
    if cfg.mesh.source == "file":
        mesh = _load_mesh(cfg)
    else:
        gen = generate_unit_square_q1 if cfg.mesh.element == "q1" else generate_unit_square_p2p1
        mesh = gen(cfg.mesh.n)
    bcs = []
    for bc in cfg.bcs:
        if bc.patch not in mesh.patches:
            raise ConfigError(f"bc.{bc.patch}: the mesh has no such patch")
        value = None if bc.kind == "traction" and bc.value == (0.0, 0.0) else _constant_bc(bc)
        bcs.append(BoundaryCondition(bc.patch, bc.kind, None if bc.kind == "slip" else value))
    try:
        return FlowProblem(mesh, MaterialParams(cfg.material.rho, cfg.material.mu), bcs, stab)
    except (ValueError, MeshError, KeyError) as exc:
        raise ConfigError(f"bc: {exc}") from None


def _cylinder_setup(cfg: CaseConfig) -> CylinderSetup:
    c = cfg.cylinder
    return CylinderSetup(
        re=c.re,
        v_inf=c.v_inf,
        diameter=c.diameter,
        rho=cfg.material.rho,
        ramp_time=c.ramp_time,
        perturbation=c.perturbation,
        perturbation_window=(c.perturbation_start, c.perturbation_end),
    )


def cmd_run(cfg: CaseConfig, out: Path) -> dict:
    """A single simulation of any case kind with the [scheme] settings."""
    if cfg.kind == "cylinder":
        return cmd_cylinder(cfg, out)
    problem = build_problem(cfg)
    scheme = _scheme(cfg)
    solver = DirectSolver()
    if cfg.kind == "mms":
        columns = ("t", "iters", "resid") + NORM_NAMES
        hooks = [lambda pb, st, rep: error_norms(pb, st)]
        with TimeseriesWriter(out / "steps.csv", columns) as writer:
            run, res = mms_run(
                problem, scheme, cfg.scheme.convection, cfg.scheme.t_end,
                cfg.mms.exact_initial_acceleration, solver, writer, hooks,
            )
        report = {"errors": run.errors, "mean_iterations": run.mean_iterations, "wall_time": run.wall_time}
    else:
        state = initial_state(problem)
        with TimeseriesWriter(out / "steps.csv", ("t", "iters", "resid")) as writer:
            res = run_simulation(problem, scheme, cfg.scheme.convection, state, cfg.scheme.t_end, (), solver, writer, tangent=cfg.scheme.tangent)
        report = {"mean_iterations": res.mean_iterations, "wall_time": res.wall_time}
    report.update(steps=len(res.reports), t_final=res.state.t)
    if cfg.output.write_final_fields:
        write_fields(problem, res.state, out / "final.vtk")
    return report


def cmd_mms(cfg: CaseConfig, out: Path) -> dict:
    """Time-step sweep over the configured schemes and convection treatments."""
    if cfg.kind != "mms":
        raise ConfigError("case.kind: the mms command needs kind = mms")
    problem = build_problem(cfg)
    solver = DirectSolver()
    mm = cfg.mms
    report = {"t_end": MMS_T_END, "sweeps": []}
    failures = []
    for token in mm.schemes:
        variant, rho_inf = parse_scheme_token(token)
        for conv in mm.convections:
            label = f"{variant}{'' if variant != 'ga' else f'_rho{rho_inf:g}'}_{conv}"
            dts, errors = [], []
            for k, dt in enumerate(mm.dts):
                sch = TimeScheme(variant, fitted_dt(dt, MMS_T_END), rho_inf)
                run_dir = out / f"{label}_{k}"
                run_dir.mkdir(exist_ok=True)
                with TimeseriesWriter(run_dir / "steps.csv", ("t", "iters", "resid")) as writer:
                    run, _ = mms_run(problem, sch, conv, MMS_T_END, mm.exact_initial_acceleration, solver, writer)
                dts.append(sch.dt)
                errors.append(run.errors)
            floor = None
            if mm.floor_dt > 0:
                floor = floor_errors(problem, variant, rho_inf, conv, mm.floor_dt, MMS_T_END, mm.exact_initial_acceleration, solver)
            slopes = None
            if len(dts) >= 3:
                slopes = slopes_above_floor(errors, dts, floor, mm.floor_factor) if floor else None
                if slopes is None:
                    slopes = convergence_order(errors, dts)
                write_convergence_csv(out / f"convergence_{label}.csv", dts, errors, slopes)
            if mm.min_slope is not None and slopes:
                low = {k: v for k, v in slopes.items() if v is not None and v < mm.min_slope}
                if low:
                    failures.append(f"{label}: slopes below {mm.min_slope}: {low}")
            report["sweeps"].append(
                {"label": label, "dts": dts, "errors": errors, "floor": floor, "slopes": slopes}
            )
    _write_report(out, report)
    if failures:
        raise GuardFailure("; ".join(failures))
    return report


def cmd_cylinder(cfg: CaseConfig, out: Path) -> dict:
    """Cylinder benchmark: C_L amplitude, Strouhal number and mean iterations."""
    if cfg.kind != "cylinder":
        raise ConfigError("case.kind: the cylinder command needs kind = cylinder")
    setup = _cylinder_setup(cfg)
    problem = build_problem(cfg)
    with TimeseriesWriter(out / "steps.csv", TIMESERIES_COLUMNS) as writer:
        res = cylinder_run(
            setup, _scheme(cfg), cfg.scheme.convection, cfg.scheme.t_end, problem,
            on_record=writer, window_fraction=cfg.cylinder.window_fraction, tangent=cfg.scheme.tangent,
        )
    report = {
        "re": setup.re,
        "mu": setup.mu,
        "cl_amplitude": res.cl_amplitude,
        "strouhal": res.st,
        "mean_cd": res.mean_cd if len(res.t) else None,
        "mean_iterations": res.mean_iterations(setup.ramp_time) if len(res.t) else None,
        "wall_time": res.wall_time,
        "steps": len(res.t),
        "flags": res.flags,
    }
    if cfg.output.write_final_fields:
        write_fields(problem, res.state, out / "final.vtk")
    _write_report(out, report)
    failures = []
    for key, value, band in (("cl_amplitude", res.cl_amplitude, cfg.cylinder.cl_range), ("strouhal", res.st, cfg.cylinder.st_range)):
        if band and (value is None or not band[0] <= value <= band[1]):
            failures.append(f"{key} = {value} outside [{band[0]}, {band[1]}]")
    if failures:
        raise GuardFailure("; ".join(failures))
    return report


def cmd_check(seed: int) -> int:
    from .checks import run_checks

    results = run_checks(seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:32s} {r.detail}  ({r.seconds:.2f} s)")
    total = sum(r.seconds for r in results)
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed in {total:.1f} s")
    return EXIT_OK if ok else EXIT_GUARD


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsfem", description=__doc__.splitlines()[0])
    parser.add_argument("--output-dir", help="run directory (default: <config stem>_out next to the config)")
    parser.add_argument("--threads", type=int, help="threads for the sparse direct solver")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomised checks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "mms", "cylinder"):
        p = sub.add_parser(name, help=globals()[f"cmd_{name}"].__doc__.splitlines()[0])
        p.add_argument("config", help="INI case file")
    sub.add_parser("check", help="run the invariant suite on tiny meshes")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        for var in ("MKL_NUM_THREADS", "OMP_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    if args.command == "check":
        return cmd_check(args.seed)
    config_path = Path(args.config)
    try:
        cfg = parse_config(config_path)
        out = _output_dir(cfg, config_path, args.output_dir)
        write_config(cfg, out / "effective.ini")
        report = globals()[f"cmd_{args.command}"](cfg, out)
        if args.command == "run":
            _write_report(out, report)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularSystemError, NewtonError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except GuardFailure as exc:
        print(f"acceptance guard failed: {exc}", file=sys.stderr)
        return EXIT_GUARD
    print(json.dumps(_summary(report), indent=2, sort_keys=True))
    return EXIT_OK


def _summary(report: dict) -> dict:
    if "sweeps" in report:
        return {s["label"]: s["slopes"] for s in report["sweeps"]}
    return report


if __name__ == "__main__":
    sys.exit(main())
