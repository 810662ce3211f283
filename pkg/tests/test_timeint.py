import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsfem.timeint import TimeScheme, alpha_combine, ga_parameters, jacobian_coefficients, new_acceleration


@pytest.mark.parametrize("rho, expected", [(0.0, (1.5, 1.0, 1.0)), (1.0, (0.5, 0.5, 0.5)), (0.5, (5 / 6, 2 / 3, 2 / 3))])
def test_ga_parameters(rho, expected):
    np.testing.assert_allclose(ga_parameters(rho), expected, rtol=1e-15)


def test_ga_rho0_exact():
    assert ga_parameters(0.0) == (1.5, 1.0, 1.0)


@pytest.mark.parametrize("rho", [-0.1, 1.5])
def test_rho_out_of_range(rho):
    with pytest.raises(ValueError):
        ga_parameters(rho)
    with pytest.raises(ValueError):
        TimeScheme("ga", 0.1, rho)


def test_scheme_validation():
    with pytest.raises(ValueError):
        TimeScheme("rk4", 0.1)
    with pytest.raises(ValueError):
        TimeScheme("bdf1", 0.0)
    assert TimeScheme("bdf2", 0.1).params == (1.0, 1.0, 1.0)
    assert TimeScheme("BDF2", 0.1).startup() == TimeScheme("bdf1", 0.1)


@pytest.mark.parametrize("scheme", [TimeScheme("bdf1", 0.1), TimeScheme("bdf2", 0.1), TimeScheme("ga", 0.1, 0.3)])
def test_steady_state_zero_acceleration(scheme):
    v = np.full(3, 2.5)
    np.testing.assert_array_equal(new_acceleration(scheme, v, v, v, np.zeros(3)), 0.0)


def test_ga_gamma_one_reduces_to_difference():
    s = TimeScheme("ga", 0.1, 0.0)
    assert new_acceleration(s, 3.0, 1.0, a_n=7.0) == pytest.approx(20.0)


def test_bdf2_exact_for_quadratic():
    s = TimeScheme("bdf2", 0.1)
    assert new_acceleration(s, 1.0, 0.81, 0.64) == pytest.approx(2.0, rel=1e-13)


@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5), t=st.floats(0, 10), dt=st.floats(0.01, 1))
def test_polynomial_exactness(a, b, c, t, dt):
    lin = lambda s: a + b * s  # noqa: E731
    quad = lambda s: a + b * s + c * s * s  # noqa: E731
    got = new_acceleration(TimeScheme("bdf1", dt), lin(t + dt), lin(t))
    assert got == pytest.approx(b, abs=1e-9 * (1 + abs(a) + abs(b) * (1 + t)) / dt)
    got = new_acceleration(TimeScheme("bdf2", dt), quad(t + dt), quad(t), quad(t - dt))
    scale = (1 + abs(a) + abs(b) * (1 + t) + abs(c) * (1 + t) ** 2) / dt
    assert got == pytest.approx(b + 2 * c * (t + dt), abs=1e-9 * scale)


def test_bdf2_and_ga_need_history():
    with pytest.raises(ValueError):
        new_acceleration(TimeScheme("bdf2", 0.1), 1.0, 0.0)
    with pytest.raises(ValueError):
        new_acceleration(TimeScheme("ga", 0.1), 1.0, 0.0)


def test_alpha_combine_examples():
    s = TimeScheme("ga", 0.1, 0.5)
    assert alpha_combine(s, 3.0, 0.0) == pytest.approx(2.0)
    assert alpha_combine(TimeScheme("ga", 0.1, 0.0), 3.0, 1.0) == 3.0
    with pytest.raises(ValueError):
        alpha_combine(s, 1.0, 0.0, "q")


@given(x=st.floats(-1e6, 1e6), rho=st.floats(0, 1), which=st.sampled_from("fm"))
def test_alpha_combine_fixed_point(x, rho, which):
    s = TimeScheme("ga", 0.1, rho)
    assert alpha_combine(s, x, x, which) == pytest.approx(x, rel=1e-15, abs=1e-300)


@pytest.mark.parametrize(
    "scheme, expected",
    [(TimeScheme("bdf1", 0.1), (10, 1)), (TimeScheme("ga", 0.1, 0), (15, 1)), (TimeScheme("ga", 0.1, 1), (10, 0.5)), (TimeScheme("bdf2", 0.1), (15, 1))],
)
def test_jacobian_coefficients(scheme, expected):
    np.testing.assert_allclose(jacobian_coefficients(scheme), expected, rtol=1e-14)


def _ga_ode_error(lam, dt, rho, t_end=1.0):
    # y' = lam y, y(0) = 1: solve alpha_m a_{n+am} = lam y_{n+af} with the GA relations
    s = TimeScheme("ga", dt, rho)
    am, af, g = s.params
    y, a = 1.0, lam
    for _ in range(round(t_end / dt)):
        # unknown y1; a1 = (y1 - y)/(g dt) + (g-1)/g a
        # am*a1 + (1-am)*a - lam*(af*y1 + (1-af)*y) = 0
        c1 = am / (g * dt) - lam * af
        c0 = am * (-y / (g * dt) + (g - 1) / g * a) + (1 - am) * a - lam * (1 - af) * y
        y1 = -c0 / c1
        a = new_acceleration(s, y1, y, a_n=a)
        y = y1
    return abs(y - np.exp(lam * t_end))


@pytest.mark.parametrize("rho", [0.0, 0.5, 1.0])
def test_ga_second_order_on_linear_ode(rho):
    # rho_inf = 0 is pre-asymptotic above dt ~ 0.02
    dts = [0.0125, 0.00625, 0.003125, 0.0015625]
    errs = [_ga_ode_error(-1.0, dt, rho) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.05)
