import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nsfem.basis import (
    TRI_REF_NODES,
    InvertedElementError,
    cell_tables,
    eval_shape,
    map_to_physical,
    quadrature_rule,
)
from nsfem.dofs import build_dofmap
from nsfem.mesh import BoundaryCondition, Mesh, generate_unit_square_p2p1, generate_unit_square_q1

Q1_NODES = np.array([[-1.0, -1], [1, -1], [1, 1], [-1, 1]])


def _ref_points(kind, rng, n=100):
    if kind == "Q1":
        return rng.uniform(-1, 1, (n, 2))
    p = rng.uniform(0, 1, (2 * n, 2))
    return p[p.sum(1) <= 1][:n]


def test_q1_center():
    np.testing.assert_allclose(eval_shape("Q1", [0.0, 0.0]).values[0], 0.25)


@pytest.mark.parametrize("kind, nodes", [("Q1", Q1_NODES), ("P1", TRI_REF_NODES[:3]), ("P2", TRI_REF_NODES)])
def test_lagrange_property(kind, nodes):
    np.testing.assert_allclose(eval_shape(kind, nodes).values, np.eye(len(nodes)), atol=1e-15)


@pytest.mark.parametrize("kind", ["Q1", "P1", "P2"])
def test_partition_of_unity(kind, rng):
    sh = eval_shape(kind, _ref_points(kind, rng))
    assert np.abs(sh.values.sum(1) - 1).max() <= 1e-13
    assert np.abs(sh.grads_ref.sum(1)).max() <= 1e-13


@pytest.mark.parametrize("kind", ["Q1", "P2"])
def test_gradients_match_finite_differences(kind, rng):
    pts = _ref_points(kind, rng, 20) * 0.8 + (0.05 if kind == "P2" else 0.0)
    h = 1e-6
    g = eval_shape(kind, pts).grads_ref
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        fd = (eval_shape(kind, pts + e).values - eval_shape(kind, pts - e).values) / (2 * h)
        np.testing.assert_allclose(g[..., d], fd, atol=1e-8)


def test_quadrature_weights():
    assert quadrature_rule("q1")[1].sum() == pytest.approx(4.0, rel=1e-15)
    assert quadrature_rule("p2")[1].sum() == pytest.approx(0.5, rel=1e-15)


def test_quadrature_exactness():
    # x^2 y^2 over [-1, 1]^2 = (2/3)^2
    p, w = quadrature_rule("q1")
    assert w @ (p[:, 0] ** 2 * p[:, 1] ** 2) == pytest.approx(4.0 / 9.0, rel=1e-14)
    # degree 5 on the reference triangle: int x^a y^b = a! b! / (a + b + 2)!
    from math import factorial

    p, w = quadrature_rule("tri")
    for a in range(6):
        for b in range(6 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert w @ (p[:, 0] ** a * p[:, 1] ** b) == pytest.approx(exact, rel=1e-13)


def test_map_identity_and_scaling():
    pts = np.array([[0.2, -0.3], [0.5, 0.5]])
    ref = eval_shape("Q1", pts)
    np.testing.assert_allclose(map_to_physical(Q1_NODES, ref).grads_phys, ref.grads_ref, atol=1e-15)
    big = map_to_physical(2.0 * Q1_NODES, ref)
    np.testing.assert_allclose(big.grads_phys, 0.5 * ref.grads_ref, atol=1e-15)


def test_map_inverted_raises():
    with pytest.raises(InvertedElementError):
        map_to_physical(Q1_NODES[::-1], eval_shape("Q1", [[0.0, 0.0]]))


quad_cells = arrays(float, (4, 2), elements=st.floats(-0.2, 0.2))


@given(perturb=quad_cells, coeff=arrays(float, 3, elements=st.floats(-5, 5)))
def test_linear_patch_on_random_quads(perturb, coeff):
    X = np.array([[0.0, 0], [1, 0], [1, 1], [0, 1]]) + perturb
    pts, _ = quadrature_rule("q1")
    ref = eval_shape("Q1", pts)
    try:
        phys = map_to_physical(X, ref)
    except InvertedElementError:
        return
    u = coeff[0] * X[:, 0] + coeff[1] * X[:, 1] + coeff[2]
    grad = np.einsum("a,pai->pi", u, phys.grads_phys)
    np.testing.assert_allclose(grad, np.broadcast_to(coeff[:2], grad.shape), atol=1e-12 * (1 + np.abs(coeff).max()))


def test_linear_field_gradient_3x_2y(rng):
    m = generate_unit_square_q1(3)
    nodes = m.nodes.copy()
    inner = np.all((nodes > 0) & (nodes < 1), axis=1)
    nodes[inner] += rng.uniform(-0.05, 0.05, (inner.sum(), 2))
    t = cell_tables(Mesh("q1", nodes, m.cells, m.patches))
    u = 3 * nodes[:, 0] + 2 * nodes[:, 1]
    grad = np.einsum("ea,eqai->eqi", u[m.cells], t.vel_grad)
    np.testing.assert_allclose(grad, np.broadcast_to([3.0, 2.0], grad.shape), atol=1e-12)


@given(c=arrays(float, 6, elements=st.floats(-3, 3)), shift=arrays(float, (3, 2), elements=st.floats(-0.2, 0.2)))
def test_p2_reproduces_quadratic_hessian(c, shift):
    V = np.array([[0.0, 0.0], [1.0, 0.1], [0.2, 0.9]]) + shift
    X = np.vstack([V, 0.5 * (V[[1, 2, 0]] + V[[2, 0, 1]])])
    e1, e2 = V[1] - V[0], V[2] - V[0]
    if e1[0] * e2[1] - e1[1] * e2[0] <= 0.05:
        return
    m = Mesh("p2p1", X, np.array([[0, 1, 2, 3, 4, 5]]))
    t = cell_tables(m)
    x, y = X[:, 0], X[:, 1]
    u = c[0] * x * x + c[1] * x * y + c[2] * y * y + c[3] * x + c[4] * y + c[5]
    hess = np.einsum("a,eqaij->eqij", u, t.vel_hess)
    exact = np.array([[2 * c[0], c[1]], [c[1], 2 * c[2]]])
    np.testing.assert_allclose(hess, np.broadcast_to(exact, hess.shape), atol=1e-10)


def test_dofmap_counts():
    assert build_dofmap(generate_unit_square_q1(1)).n_dofs == 12
    assert build_dofmap(generate_unit_square_p2p1(1)).n_dofs == 22
    assert build_dofmap(generate_unit_square_q1(250)).n_dofs == 189003


@pytest.mark.parametrize("kind", ["q1", "p2p1"])
def test_dofmap_invariants(kind):
    m = generate_unit_square_q1(3) if kind == "q1" else generate_unit_square_p2p1(3)
    bcs = [BoundaryCondition("left", "dirichlet"), BoundaryCondition("bottom", "slip"), BoundaryCondition("right", "traction")]
    dm = build_dofmap(m, bcs=bcs)
    cd = dm.cell_dofs()
    assert np.array_equal(np.unique(cd), np.arange(dm.n_dofs))
    nv = dm.n_velocity
    vel_cols = cd[:, : cd.shape[1] - m.vertex_cells.shape[1]]
    assert vel_cols.max() < nv <= cd[:, vel_cols.shape[1]:].min()
    dd = dm.dirichlet_dofs()
    assert dd.max() < nv
    on_patch = np.union1d(m.patch_nodes("left"), m.patch_nodes("bottom"))
    assert set((dd // 2).tolist()) <= set(on_patch.tolist())


def test_dofmap_unknown_patch():
    with pytest.raises(KeyError):
        build_dofmap(generate_unit_square_q1(1), bcs=[BoundaryCondition("nowhere", "dirichlet")])
