import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsfem.cases import mms_problem
from nsfem.checks import momentum_operator_fd
from nsfem.stepper import FlowState
from nsfem.verification import (
    NORM_NAMES,
    ManufacturedSolution,
    convergence_order,
    error_norms,
    mms_body_force,
    mms_divergence,
    mms_fields,
    mms_pressure,
    mms_velocity,
    slopes_above_floor,
    write_convergence_csv,
)


def test_fields_at_rest_and_origin():
    x, y = np.random.default_rng(0).uniform(0, 1, (2, 20))
    (vx, vy), p = mms_fields(x, y, 0.0)
    assert not vx.any() and not vy.any() and not p.any()
    (vx, vy), p = mms_fields(0.0, 0.0, np.pi / 4)
    assert vx == pytest.approx(0.0, abs=1e-16) and vy == pytest.approx(0.0, abs=1e-16)
    assert p == pytest.approx(-0.5, rel=1e-15)


@given(x=st.floats(-5, 5), y=st.floats(-5, 5), t=st.floats(0, 20))
def test_divergence_free(x, y, t):
    assert abs(mms_divergence(x, y, t)) <= 1e-14


def test_body_force_at_t0():
    x, y = np.random.default_rng(1).uniform(0, 1, (2, 20))
    gx, gy = mms_body_force(x, y, 0.0, rho=1.7)
    np.testing.assert_allclose(gx, -2 * 1.7 * np.cos(x) * np.sin(y), rtol=1e-14)
    np.testing.assert_allclose(gy, 2 * 1.7 * np.sin(x) * np.cos(y), rtol=1e-14)


def test_body_force_against_finite_differences(rng):
    x, y = rng.uniform(0, 1, (2, 50))
    t = rng.uniform(0.1, 5.0, 50)
    g = np.stack(mms_body_force(x, y, t, 1.0, 0.02))
    fd = momentum_operator_fd(x, y, t, 1.0, 0.02)
    assert np.linalg.norm(g - fd, axis=0).max() / np.linalg.norm(g, axis=0).max() <= 1e-6


def test_body_force_linear_in_mu(rng):
    x, y, t = rng.uniform(0, 1, (3, 30))
    g0 = np.stack(mms_body_force(x, y, t, 1.2, 0.0))
    g1 = np.stack(mms_body_force(x, y, t, 1.2, 0.3))
    g2 = np.stack(mms_body_force(x, y, t, 1.2, 0.6))
    np.testing.assert_allclose(g2 - g1, g1 - g0, atol=1e-14)
    # the viscous part is -mu lap v = -mu (-2 v)
    vx, vy = mms_velocity(x, y, t)
    np.testing.assert_allclose(g1 - g0, 0.3 * 2 * np.stack([vx, vy]), atol=1e-14)


def _state(problem, v, p, t):
    return FlowState(v, p, np.zeros_like(v), None, t)


def test_zero_field_gives_exact_norms():
    # int_0^1 cos^2 = 1/2 + sin 2 / 4, int_0^1 sin^2 = 1/2 - sin 2 / 4
    problem = mms_problem(24)
    t = 0.6
    st0 = _state(problem, np.zeros(problem.dofmap.n_velocity), np.zeros(problem.dofmap.n_pressure), t)
    e = error_norms(problem, st0)
    c2, s2 = 0.5 + np.sin(2) / 4, 0.5 - np.sin(2) / 4
    amp = np.sin(2 * t)
    assert e["L2_vx"] == pytest.approx(abs(amp) * np.sqrt(c2 * s2), rel=1e-6)
    assert e["L2_vy"] == pytest.approx(abs(amp) * np.sqrt(s2 * c2), rel=1e-6)
    # grad vx = (sin x sin y, -cos x cos y) sin 2t -> |grad|^2 integrates to s2^2 + c2^2
    assert e["H1_vx"] == pytest.approx(abs(amp) * np.sqrt(c2 * s2 + s2 * s2 + c2 * c2), rel=1e-6)
    # p^2 = sin^4(2t)/16 (cos 2x + cos 2y)^2
    i1 = 0.5 + np.sin(4) / 8  # int cos^2 2x
    i2 = np.sin(2) / 2  # int cos 2x
    assert e["L2_p"] == pytest.approx(np.sin(2 * t) ** 2 / 4 * np.sqrt(2 * i1 + 2 * i2 * i2), rel=1e-6)


@pytest.mark.parametrize("kind, order", [("q1", 2.0), ("p2p1", 3.0)])
def test_interpolant_error_rate(kind, order):
    errs = []
    hs = [1 / 8, 1 / 16, 1 / 32]
    for h in hs:
        problem = mms_problem(round(1 / h), kind)
        U = problem.interpolate(mms_velocity, mms_pressure, 1.0)
        v, p = problem.split(U)
        errs.append(error_norms(problem, _state(problem, v, p, 1.0))["L2_vx"])
    assert np.polyfit(np.log(hs), np.log(errs), 1)[0] == pytest.approx(order, abs=0.15)


def test_convergence_order_synthetic():
    dts = [0.4, 0.2, 0.1, 0.05]
    assert convergence_order([3 * d**2 for d in dts], dts) == pytest.approx(2.0, abs=1e-12)
    assert convergence_order([0.5 * d for d in dts], dts) == pytest.approx(1.0, abs=1e-12)
    out = convergence_order([{"a": d, "b": d**2} for d in dts], dts)
    assert out == pytest.approx({"a": 1.0, "b": 2.0})


def test_convergence_order_preconditions():
    with pytest.raises(ValueError):
        convergence_order([1.0, 0.5], [0.2, 0.1])
    with pytest.raises(ValueError):
        convergence_order([1.0, 0.5, 0.2], [0.1, 0.2, 0.4])


def test_slopes_above_floor():
    dts = [0.4, 0.2, 0.1, 0.05, 0.025]
    floor = {"a": 1e-3}
    errs = [{"a": d**2 + 1e-3} for d in dts]
    s = slopes_above_floor(errs, dts, floor, 5.0)
    # only 0.4, 0.2, 0.1 exceed 5e-3
    assert s["a"] == pytest.approx(convergence_order([e["a"] for e in errs[:3]], dts[:3]))
    assert slopes_above_floor(errs, dts, {"a": 1.0})["a"] is None


def test_manufactured_solution_wraps_fields(rng):
    m = ManufacturedSolution(2.0, 0.1)
    x, y, t = rng.uniform(0, 1, (3, 5))
    np.testing.assert_array_equal(m.body_force(x, y, t)[0], mms_body_force(x, y, t, 2.0, 0.1)[0])


def test_convergence_csv(tmp_path):
    dts = [0.4, 0.2, 0.1]
    errs = [dict.fromkeys(NORM_NAMES, d**2) for d in dts]
    write_convergence_csv(tmp_path / "c.csv", dts, errs)
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0].split(",") == ["dt", *NORM_NAMES]
    assert len(rows) == 5 and rows[-1].startswith("slope,2.0000")
