"""Special functions and quadrature for the coverage model.

Provides the unit-ball volume, the two-ball union volume, the radial
exponential integral driving the limiting variances, the limiting variance
densities themselves, and the standard normal CDF/PDF.

All functions are pure; quadrature goes through a single adaptive
Gauss-Kronrod wrapper controlled by :class:`QuadratureSpec`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from scipy import integrate

from .errors import NumericalError

__all__ = [
    "QuadratureSpec",
    "unit_ball_volume",
    "omega",
    "integral_J",
    "g_V",
    "g_S",
    "std_normal_cdf",
    "std_normal_pdf",
]

# Dimensions above this need an explicit opt-in (isolated-ball constants are
# only known for d <= 3; the analytic functions themselves are generic).
MAX_DEFAULT_DIM = 5


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for adaptive quadrature.

    The five-significant-figure targets downstream need ~6 accurate digits
    end to end, so interior integrals default to two extra digits of
    headroom.
    """

    absolute_tolerance: float = 1e-12
    relative_tolerance: float = 1e-12
    max_subdivisions: int = 200

    def __post_init__(self):
        if self.absolute_tolerance <= 0 or self.relative_tolerance <= 0:
            raise ValueError("quadrature tolerances must be strictly positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUADRATURE = QuadratureSpec()


def _quad(f: Callable[[float], float], a: float, b: float, spec: QuadratureSpec) -> float:
    """Adaptive Gauss-Kronrod integral of ``f`` over [a, b].

    Raises :class:`NumericalError` with the achieved error estimate when the
    subdivision budget is exhausted before the tolerances are met.
    """
    if b <= a:
        return 0.0
    out = integrate.quad(
        f,
        a,
        b,
        epsabs=spec.absolute_tolerance,
        epsrel=spec.relative_tolerance,
        limit=spec.max_subdivisions,
        full_output=1,
    )
    value, abserr = out[0], out[1]
    tol = max(spec.absolute_tolerance, spec.relative_tolerance * abs(value))
    if len(out) > 3 and abserr > 10 * tol:
        raise NumericalError(
            f"quadrature did not converge on [{a}, {b}]: {out[3]}",
            achieved_error=abserr,
        )
    return value


def _check_dim(d: int, allow_high_dim: bool) -> None:
    if not isinstance(d, (int,)) or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    if d > MAX_DEFAULT_DIM and not allow_high_dim:
        raise ValueError(
            f"d={d} exceeds the default cap {MAX_DEFAULT_DIM}; "
            "pass allow_high_dim=True to evaluate anyway"
        )


def unit_ball_volume(d: int, allow_high_dim: bool = False) -> float:
    """Volume of the unit ball in d dimensions, pi^(d/2) / Gamma(1 + d/2)."""
    _check_dim(d, allow_high_dim)
    return math.pi ** (d / 2) / math.gamma(1 + d / 2)


def omega(
    d: int,
    u: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    allow_high_dim: bool = False,
) -> float:
    """Volume of the union of two unit d-balls with centers ``u`` apart.

    For d=1 this is exactly 2 + u. For d >= 2 the cross-sectional reduction
    gives the unit-ball volume plus a one-dimensional integral whose
    integrand has a derivative singularity at u = 2; the adaptive rule
    subdivides near that endpoint on its own.
    """
    _check_dim(d, allow_high_dim)
    if not 0.0 <= u <= 2.0 + 1e-12:
        raise ValueError(f"center distance must lie in [0, 2], got {u}")
    u = min(u, 2.0)
    if d == 1:
        return 2.0 + u
    exponent = (d - 1) / 2
    cap = _quad(lambda t: (1.0 - (t / 2.0) ** 2) ** exponent, 0.0, u, spec)
    return unit_ball_volume(d, allow_high_dim) + unit_ball_volume(
        d - 1, allow_high_dim
    ) * cap


def integral_J(
    r: float,
    d: int,
    rho: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    allow_high_dim: bool = False,
) -> float:
    """Radial integral d*pi_d * int_0^r exp(-rho^d * omega_d(t)) t^(d-1) dt.

    Nonnegative and nondecreasing in r; bounded above by pi_d * r^d because
    the exponential factor never exceeds one.
    """
    _check_dim(d, allow_high_dim)
    if r < 0 or r > 2.0 + 1e-12:
        raise ValueError(f"upper limit must lie in [0, 2], got {r}")
    if rho < 0:
        raise ValueError(f"radius must be nonnegative, got {rho}")
    if r == 0:
        return 0.0
    rho_d = rho**d

    def integrand(t: float) -> float:
        return math.exp(-rho_d * omega(d, t, spec, allow_high_dim)) * t ** (d - 1)

    return d * unit_ball_volume(d, allow_high_dim) * _quad(integrand, 0.0, r, spec)


def g_V(
    rho: float,
    d: int,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    allow_high_dim: bool = False,
) -> float:
    """Limiting variance density of the covered volume.

    rho^d * J_{2,d}(rho) - (2^d*phi + phi^2) * exp(-2*phi) with
    phi = pi_d * rho^d. Strictly positive for every rho > 0; a nonpositive
    value signals a quadrature or formula bug and raises.
    """
    _check_dim(d, allow_high_dim)
    if rho <= 0:
        raise ValueError(f"radius must be positive, got {rho}")
    phi = unit_ball_volume(d, allow_high_dim) * rho**d
    value = rho**d * integral_J(2.0, d, rho, spec, allow_high_dim) - (
        2**d * phi + phi * phi
    ) * math.exp(-2.0 * phi)
    if value <= 0:
        raise NumericalError(
            f"g_V({rho}, d={d}) evaluated nonpositive ({value}); "
            "the limit is provably positive, so the quadrature is broken"
        )
    return value


def g_S(
    rho: float,
    d: int,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    allow_high_dim: bool = False,
) -> float:
    """Limiting variance density of the isolated-ball count.

    exp(-phi) - (1 + (2^d - 2)*phi + phi^2) * exp(-2*phi)
    + rho^d * (J_{2,d}(rho) - J_{1,d}(rho)). Strictly positive.
    """
    _check_dim(d, allow_high_dim)
    if rho <= 0:
        raise ValueError(f"radius must be positive, got {rho}")
    phi = unit_ball_volume(d, allow_high_dim) * rho**d
    j2 = integral_J(2.0, d, rho, spec, allow_high_dim)
    j1 = integral_J(1.0, d, rho, spec, allow_high_dim)
    value = (
        math.exp(-phi)
        - (1.0 + (2**d - 2) * phi + phi * phi) * math.exp(-2.0 * phi)
        + rho**d * (j2 - j1)
    )
    if value <= 0:
        raise NumericalError(
            f"g_S({rho}, d={d}) evaluated nonpositive ({value}); "
            "the limit is provably positive, so the quadrature is broken"
        )
    return value


_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def std_normal_cdf(t: float) -> float:
    """Standard normal CDF via the complementary error function.

    The platform erfc is accurate to within a few ulp, which keeps the
    absolute CDF error below 1e-15 everywhere.
    """
    return 0.5 * math.erfc(-t / _SQRT2)


def std_normal_pdf(t: float) -> float:
    """Standard normal density (2*pi)^(-1/2) * exp(-t^2/2)."""
    return _INV_SQRT_2PI * math.exp(-0.5 * t * t)
