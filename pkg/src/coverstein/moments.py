"""Exact finite-n means and variances of the covered volume V and the
isolated-ball count S.

The mean formulas hold when 2*rho < n^(1/d) and the variance formulas when
4*rho < n^(1/d); both are enforced as hard preconditions rather than
returning formally-computed values outside their regime.

Powers of the form (1 - x/n)^m are evaluated as exp(m*log1p(-x/n)), and the
difference of the two nearly-equal O(n^2) terms in each variance formula is
carried out on the exponent scale so the result keeps >= 8 significant
digits up to n ~ 1e8.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .analytic import DEFAULT_QUADRATURE, QuadratureSpec, _quad, omega
from .errors import NumericalError
from .geometry import ModelParams

__all__ = ["MomentSet", "mean_V", "mean_S", "variance_V", "variance_S", "moment_set"]


@dataclass(frozen=True)
class MomentSet:
    mu_V: float
    mu_S: float
    var_V: float
    var_S: float
    validity: dict[str, bool]

    def to_dict(self) -> dict:
        return {
            "mu_V": self.mu_V,
            "mu_S": self.mu_S,
            "var_V": self.var_V,
            "var_S": self.var_S,
            "validity": dict(self.validity),
        }


def _log_power_base(params: ModelParams) -> float:
    """log(1 - phi/n), the per-point vacancy exponent."""
    return math.log1p(-params.phi / params.n)


def mean_V(params: ModelParams) -> float:
    """E[V] = n * (1 - (1 - phi/n)^n)."""
    params.require("mean_formulas_valid")
    return params.n * -math.expm1(params.n * _log_power_base(params))


def mean_S(params: ModelParams) -> float:
    """E[S] = n * (1 - phi/n)^(n-1)."""
    params.require("mean_formulas_valid")
    return params.n * math.exp((params.n - 1) * _log_power_base(params))


def _log_ratio_diff(x: float) -> float:
    """log1p(-2x) - 2*log1p(-x), via its power series for small x.

    Direct subtraction loses ~x/2 of the mantissa; the series
    -(x^2 + 2x^3 + 3.5x^4 + ...) with coefficients (2^k - 2)/k keeps full
    precision in the regime x = phi/n -> 0 that matters for large n.
    """
    if x >= 1e-3:
        return math.log1p(-2.0 * x) - 2.0 * math.log1p(-x)
    acc = 0.0
    # sum_{k>=2} (2^k - 2)/k * x^k, truncated where terms fall below 1e-40
    for k in range(8, 1, -1):
        acc = acc * x + (2.0**k - 2.0) / k
    return -acc * x * x


def _compensated_pair_term(params: ModelParams, shift: int) -> float:
    """n(n-1)^[shift] * [ (1-2^d*phi/n)(1-2phi/n)^(n-shift) - (1-phi/n)^(2n-shift) ].

    ``shift`` is 0 for the V formula and 2 for the S formula (where the outer
    product is n(n-1) instead of n^2). Both large terms share the scale
    exp((2n-shift) * log1p(-phi/n)); factoring it out leaves an expm1-sized
    bracket that is immune to the cancellation.
    """
    n = params.n
    phi = params.phi
    x = phi / n
    v = 2**params.d * phi / n
    log_big = (2 * n - shift) * math.log1p(-x)
    # exponent difference (n-shift)*log1p(-2x) - (2n-shift)*log1p(-x),
    # rearranged so the O(n) cancellation happens inside the series
    diff = n * _log_ratio_diff(x) + shift * (math.log1p(-x) - math.log1p(-2.0 * x))
    outer = float(n) * ((n - 1) if shift else n)
    bracket = math.expm1(diff) * (1.0 - v) - v
    return outer * math.exp(log_big) * bracket


def _radial_integral(
    params: ModelParams, power: int, lower: float, spec: QuadratureSpec
) -> float:
    """d*pi_d*rho^d * int_lower^2 (1 - rho^d*omega_d(u)/n)^power u^(d-1) du."""
    d, n, rho = params.d, params.n, params.rho
    rho_d = rho**d
    pi_d = params.phi / rho_d

    def integrand(u: float) -> float:
        w = rho_d * omega(d, u, spec, params.allow_high_dim) / n
        return math.exp(power * math.log1p(-w)) * u ** (d - 1)

    return d * pi_d * rho_d * _quad(integrand, lower, 2.0, spec)


def variance_V(
    params: ModelParams, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """Exact Var(V): pairwise vacancy integral over the 2*rho ball plus the
    compensated difference of the two O(n^2) occupancy terms."""
    params.require("variance_formulas_valid")
    n = params.n
    ball = n * _radial_integral(params, n, 0.0, spec)
    tail = _compensated_pair_term(params, shift=0)
    var = ball + tail
    if var <= 0:
        raise NumericalError(
            f"Var(V) evaluated nonpositive ({var}) at d={params.d}, n={n}, "
            f"rho={params.rho}; cancellation exceeded the compensated budget",
            achieved_error=abs(var),
        )
    return var


def variance_S(
    params: ModelParams, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """Exact Var(S): Bernoulli term, annular pair integral, and the
    compensated covariance tail."""
    params.require("variance_formulas_valid")
    n = params.n
    m1 = (n - 1) * _log_power_base(params)
    bernoulli = n * math.exp(m1) * -math.expm1(m1)
    annulus = (n - 1) * _radial_integral(params, n - 2, 1.0, spec)
    tail = _compensated_pair_term(params, shift=2)
    var = bernoulli + annulus + tail
    if var <= 0:
        raise NumericalError(
            f"Var(S) evaluated nonpositive ({var}) at d={params.d}, n={n}, "
            f"rho={params.rho}; cancellation exceeded the compensated budget",
            achieved_error=abs(var),
        )
    return var


def moment_set(
    params: ModelParams, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> MomentSet:
    return MomentSet(
        mu_V=mean_V(params),
        mu_S=mean_S(params),
        var_V=variance_V(params, spec),
        var_S=variance_S(params, spec),
        validity=params.validity(),
    )
