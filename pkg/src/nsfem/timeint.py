"""BDF1, BDF2 and generalised-alpha relations for first-order systems."""

from __future__ import annotations

from dataclasses import dataclass

VARIANTS = ("bdf1", "bdf2", "ga")


def ga_parameters(rho_inf: float) -> tuple[float, float, float]:
    """``(alpha_m, alpha_f, gamma)`` of the second-order generalised-alpha scheme."""
    if not 0.0 <= rho_inf <= 1.0:
        raise ValueError(f"rho_inf must lie in [0, 1], got {rho_inf}")
    alpha_m = 0.5 * (3.0 - rho_inf) / (1.0 + rho_inf)
    alpha_f = 1.0 / (1.0 + rho_inf)
    gamma = 0.5 + alpha_m - alpha_f
    return alpha_m, alpha_f, gamma


@dataclass(frozen=True)
class TimeScheme:
    variant: str
    dt: float
    rho_inf: float = 0.0

    def __post_init__(self):
        v = self.variant.lower()
        if v not in VARIANTS:
            raise ValueError(f"unknown time integrator {self.variant!r}")
        object.__setattr__(self, "variant", v)
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if v == "ga":
            ga_parameters(self.rho_inf)

    @property
    def params(self) -> tuple[float, float, float]:
        if self.variant == "ga":
            return ga_parameters(self.rho_inf)
        return 1.0, 1.0, 1.0

    @property
    def alpha_m(self) -> float:
        return self.params[0]

    @property
    def alpha_f(self) -> float:
        return self.params[1]

    @property
    def gamma(self) -> float:
        return self.params[2]

    def startup(self) -> "TimeScheme":
        """Scheme used on the first step (BDF2 starts with BDF1)."""
        if self.variant == "bdf2":
            return TimeScheme("bdf1", self.dt)
        return self


def new_acceleration(scheme: TimeScheme, v_next, v_n, v_prev=None, a_n=None):
    """Acceleration at ``t_{n+1}`` implied by the scheme."""
    dt = scheme.dt
    if scheme.variant == "bdf1":
        return (v_next - v_n) / dt
    if scheme.variant == "bdf2":
        if v_prev is None:
            raise ValueError("BDF2 needs v_{n-1}; use BDF1 on the first step")
        return (3.0 * v_next - 4.0 * v_n + v_prev) / (2.0 * dt)
    gamma = scheme.gamma
    if a_n is None:
        raise ValueError("generalised-alpha needs the previous acceleration")
    return (v_next - v_n) / (gamma * dt) + ((gamma - 1.0) / gamma) * a_n


def alpha_combine(scheme: TimeScheme, x_next, x_n, which: str = "f"):
    """Intermediate level ``alpha * x_next + (1 - alpha) * x_n``."""
    if which not in ("f", "m"):
        raise ValueError("which must be 'f' or 'm'")
    alpha = scheme.alpha_f if which == "f" else scheme.alpha_m
    if alpha == 1.0:
        return x_next
    return alpha * x_next + (1.0 - alpha) * x_n


def jacobian_coefficients(scheme: TimeScheme) -> tuple[float, float]:
    """Derivatives of the alpha-level acceleration and velocity w.r.t. ``v_{n+1}``."""
    if scheme.variant == "bdf1":
        return 1.0 / scheme.dt, 1.0
    if scheme.variant == "bdf2":
        return 1.5 / scheme.dt, 1.0
    alpha_m, alpha_f, gamma = scheme.params
    return alpha_m / (gamma * scheme.dt), alpha_f
