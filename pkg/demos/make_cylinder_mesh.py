"""Regenerate the packaged cylinder fixture mesh and print its statistics.

    python demos/make_cylinder_mesh.py [output.msh]

The fixture is the default block-structured Q1 channel: an O-grid around
the unit cylinder inside a [-2, 2]^2 box, graded tensor blocks outside it,
on [-8, 25] x [-8, 8].
"""

import sys
from pathlib import Path

import numpy as np

from nsfem.mesh import cell_areas, characteristic_length, cylinder_channel_q1, load_mesh, save_mesh

target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/nsfem/data/cylinder_q1.msh"

mesh = cylinder_channel_q1()
mesh.validate()
save_mesh(mesh, target)
again = load_mesh(target)
assert np.array_equal(again.nodes, mesh.nodes) and np.array_equal(again.cells, mesh.cells)

h = characteristic_length(mesh)
print(f"wrote {target}")
print(f"  {mesh.n_nodes} nodes, {mesh.n_cells} cells, area {cell_areas(mesh).sum():.4f}")
print(f"  h from {h.min():.4f} to {h.max():.4f}")
for name, pairs in mesh.patches.items():
    print(f"  patch {name:9s} {len(pairs)} edges")
