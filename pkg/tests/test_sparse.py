import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from nsfem.basis import cell_tables
from nsfem.forms import Levels, MaterialParams, assemble_step_system
from nsfem.mesh import BoundaryCondition, generate_unit_square_q1
from nsfem.problem import FlowProblem
from nsfem.sparse import (
    DirectSolver,
    PatternError,
    SingularSystemError,
    SparseSystem,
    add_local,
    apply_dirichlet_rows,
    assemble_matrix,
    build_pattern,
    export_matrix_market,
    solve_direct,
)
from nsfem.stepper import initial_state
from nsfem.timeint import TimeScheme

BACKENDS = ["superlu"] + (["pardiso"] if DirectSolver().backend == "pardiso" else [])


def _q1_cell_dofs(n):
    # node-wise scalar layout
    return generate_unit_square_q1(n).cells


def test_single_cell_dense_pattern():
    cd = np.arange(12)[None]
    p = build_pattern(cd, 12)
    assert p.nnz == 144


def test_disjoint_components_block_diagonal():
    p = build_pattern(np.array([[0, 1], [2, 3]]), 4)
    mask = np.zeros((4, 4), bool)
    mask[:2, :2] = mask[2:, 2:] = True
    rows, cols = np.repeat(np.arange(4), np.diff(p.indptr)), p.indices
    assert mask[rows, cols].all() and p.nnz == 8


def test_center_velocity_row_has_27_columns():
    problem = FlowProblem(generate_unit_square_q1(2), MaterialParams(1.0, 1.0))
    p = problem.pattern
    centre = 4
    row = problem.dofmap.velocity_dofs(centre)[0]
    assert p.indptr[row + 1] - p.indptr[row] == 27


@given(st.integers(1, 5))
def test_pattern_sorted_and_symmetric(n):
    p = build_pattern(_q1_cell_dofs(n), (n + 1) ** 2)
    for i in range(p.n):
        cols = p.indices[p.indptr[i] : p.indptr[i + 1]]
        assert np.all(np.diff(cols) > 0)
    A = sp.csr_matrix((np.ones(p.nnz), p.indices, p.indptr), shape=(p.n, p.n))
    assert (A != A.T).nnz == 0


def test_add_local_identity_twice_and_zero():
    cd = np.array([[0, 1, 2]])
    p = build_pattern(cd, 3)
    A = p.zeros()
    add_local(A, p, [0, 1, 2], np.eye(3))
    add_local(A, p, [0, 1, 2], np.eye(3))
    np.testing.assert_array_equal(A.diagonal(), 2.0)
    before = A.data.copy()
    add_local(A, p, [0, 1, 2], np.zeros((3, 3)))
    np.testing.assert_array_equal(A.data, before)


def test_add_local_outside_pattern():
    p = build_pattern(np.array([[0, 1], [2, 3]]), 4)
    with pytest.raises(PatternError):
        add_local(p.zeros(), p, [0, 3], np.ones((2, 2)))


def test_mass_matrix_row_sums_are_lumped_areas():
    m = generate_unit_square_q1(4)
    t = cell_tables(m)
    local = np.einsum("eq,qa,qb->eab", t.wdet, t.vel_val, t.vel_val)
    M = assemble_matrix(build_pattern(m.cells, m.n_nodes), local)
    lumped = np.bincount(m.cells.ravel(), weights=np.einsum("eq,qa->ea", t.wdet, t.vel_val).ravel())
    np.testing.assert_allclose(M.sum(axis=1).A1, lumped, rtol=1e-13)
    assert M.sum() == pytest.approx(1.0, rel=1e-13)


def test_assembly_bitwise_deterministic(rng):
    m = generate_unit_square_q1(6)
    p = build_pattern(m.cells, m.n_nodes)
    local = rng.normal(size=(m.n_cells, 4, 4))
    a, b = assemble_matrix(p, local), assemble_matrix(p, local)
    assert a.data.tobytes() == b.data.tobytes()


def test_dirichlet_rows():
    A = sp.csr_matrix(np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]]))
    b = np.ones(3)
    apply_dirichlet_rows(A, b, [1], [7.0])
    np.testing.assert_array_equal(A.toarray()[1], [0, 1, 0])
    assert b[1] == 7.0 and A.nnz == 7


@pytest.mark.parametrize("backend", BACKENDS)
def test_identity_and_hand_solve(backend, rng):
    s = DirectSolver(backend)
    b = rng.normal(size=5)
    np.testing.assert_allclose(s.solve(SparseSystem(sp.identity(5, format="csr"), b)), b, rtol=1e-15)
    x = s.solve(SparseSystem(sp.csr_matrix([[2.0, 1.0], [1.0, 3.0]]), np.array([3.0, 5.0])))
    np.testing.assert_allclose(x, [0.8, 1.4], rtol=1e-14)


def _stokes_system(n=4):
    wall = lambda x, y, t: (np.where(np.asarray(y) > 1 - 1e-12, 1.0, 0.0), np.zeros_like(np.asarray(x)))  # noqa: E731
    bcs = [BoundaryCondition(p, "dirichlet", wall) for p in ("left", "right", "bottom", "top")]
    problem = FlowProblem(generate_unit_square_q1(n), MaterialParams(1.0, 1.0), bcs)
    problem.dofmap.pin_pressure(0, lambda x, y, t: 0.0)
    st0 = initial_state(problem)
    lv = Levels(st0.v, st0.p, st0.a, None, 0.0)
    system, _ = assemble_step_system(problem, lv, TimeScheme("bdf1", 0.1), "proposed", st0.U)
    return system


@pytest.mark.parametrize("backend", BACKENDS)
def test_stokes_vs_dense_oracle(backend):
    system = _stokes_system()
    x = DirectSolver(backend).solve(system)
    ref = np.linalg.solve(system.matrix.toarray(), system.rhs)
    np.testing.assert_allclose(x, ref, atol=1e-10 * np.abs(ref).max())
    r = np.linalg.norm(system.matrix @ x - system.rhs) / np.linalg.norm(system.rhs)
    assert r <= 1e-10


@pytest.mark.parametrize("backend", BACKENDS)
def test_solve_is_deterministic(backend):
    system = _stokes_system()
    s = DirectSolver(backend)
    assert s.solve(system).tobytes() == s.solve(system).tobytes()


@pytest.mark.parametrize("backend", BACKENDS)
def test_singular_reports_pivot(backend):
    A = sp.csr_matrix(np.array([[1.0, 0, 0], [0, 1.0, 1.0], [0, 1.0, 1.0]]))
    with pytest.raises(SingularSystemError) as exc:
        DirectSolver(backend).solve(SparseSystem(A, np.array([1.0, 1.0, 2.0])))
    assert exc.value.pivot == 2


def test_solve_direct_default_and_export(tmp_path):
    system = SparseSystem(sp.csr_matrix([[2.0, 1.0], [1.0, 3.0]]), np.array([3.0, 5.0]))
    np.testing.assert_allclose(solve_direct(system), [0.8, 1.4])
    export_matrix_market(system, tmp_path / "sys")
    np.testing.assert_array_equal(scipy.io.mmread(tmp_path / "sys.mtx").toarray(), system.matrix.toarray())
