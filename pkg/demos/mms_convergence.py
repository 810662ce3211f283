"""Temporal convergence on the manufactured solution.

    python demos/mms_convergence.py [n] [convection]

Runs the unit-square manufactured solution to t = 5 with each time scheme at
a range of step sizes, then prints the error table and the fitted orders.
A run at a much finer step gives the spatial floor; points within 5x of it
are left out of the fit, because there the temporal error is no longer
visible. The default 32 x 32 mesh takes a couple of minutes; 64 matches the
acceptance setting.
"""

import sys

from nsfem.cases import mms_problem
from nsfem.sparse import DirectSolver
from nsfem.studies import mms_sweep

n = int(sys.argv[1]) if len(sys.argv) > 1 else 32
convection = sys.argv[2] if len(sys.argv) > 2 else "proposed"
dts = (0.4, 0.2, 0.1, 0.05, 0.025)

problem = mms_problem(n)
solver = DirectSolver()
print(f"{n} x {n} Q1 mesh, {problem.n_dofs} dofs, {convection} convection")

for scheme, rho_inf in (("bdf1", 0.0), ("bdf2", 0.0), ("ga", 0.0), ("ga", 0.5)):
    sweep = mms_sweep(n, scheme, rho_inf, convection, dts, floor_dt=0.00625, problem=problem, solver=solver)
    name = scheme.upper() if scheme != "ga" else f"GA(rho_inf={rho_inf:g})"
    print(f"\n{name}  ({sweep.wall_time:.0f} s)")
    print(f"{'dt':>8s} {'L2 vx':>10s} {'H1 vx':>10s} {'L2 p':>10s} {'iters':>6s}")
    for run in sweep.runs:
        e = run.errors
        print(f"{run.dt:8.4f} {e['L2_vx']:10.3e} {e['H1_vx']:10.3e} {e['L2_p']:10.3e} {run.mean_iterations:6.2f}")
    f = sweep.floor
    print(f"{'floor':>8s} {f['L2_vx']:10.3e} {f['H1_vx']:10.3e} {f['L2_p']:10.3e}")
    slopes = sweep.slopes_excluding_floor(5.0)
    print("order   " + "  ".join(f"{k}={'n/a' if slopes[k] is None else f'{slopes[k]:.2f}'}" for k in ("L2_vx", "H1_vx", "L2_p")))
