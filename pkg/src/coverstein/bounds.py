"""Berry-Esseen bound constants for the coverage model.

Finite-n bounds for the covered volume V and the isolated count S, their
n -> infinity limits, the generic size-bias Kolmogorov bound they factor
through, and the asymptotic lower bound for S. The eta expressions are
transcribed with one named subexpression per displayed factor so they can be
reviewed against the source formulas mechanically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .analytic import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    g_S,
    g_V,
    std_normal_pdf,
    unit_ball_volume,
)
from .geometry import ModelParams
from .moments import MomentSet

__all__ = [
    "KissingConstants",
    "kissing_constants",
    "eta_V",
    "eta_S",
    "eta_V_limit",
    "eta_S_limit",
    "size_bias_ks_bound",
    "theorem_bound_V",
    "theorem_bound_S",
    "delta_V",
    "delta_S",
    "lower_bound_S",
    "finite_n_lower_bound_S",
    "BoundReport",
    "bound_report",
]


@dataclass(frozen=True)
class KissingConstants:
    """kappa_d: max unit balls intersecting a central unit ball while mutually
    disjoint; kappa_plus = 1 + kappa_d."""

    kappa: int

    @property
    def kappa_plus(self) -> int:
        return self.kappa + 1


# kappa_1 = 2 is forced: two disjoint unit intervals can each intersect a
# central unit interval (one from each side), and a third cannot.
_KAPPA = {1: 2, 2: 5, 3: 12}


def kissing_constants(d: int) -> KissingConstants:
    if d not in _KAPPA:
        raise ValueError(
            f"kappa_d is only specified for d <= 3; got d={d} "
            "(isolated-count bounds are unavailable in this dimension)"
        )
    return KissingConstants(_KAPPA[d])


def eta_V(params: ModelParams) -> float:
    """Finite-n conditional-variance constant for the V coupling.

    Requires n > 6^d * phi so the rational factors stay positive.
    """
    params.require("theorem_V_valid")
    d, n, phi = params.d, params.n, params.phi
    ratio_6 = (2 * n - 6**d * phi) / (n - 6**d * phi)
    ratio_2 = (2 * n - 3 * 2**d * phi) / (n - 3 * 2**d * phi)
    local = 2 * phi**2 * ((3**d + 1) * phi + 1) ** 2
    local *= 1 + (2**d + 1) * 6**d * phi + ratio_6 * 6 ** (2 * d) * phi**2
    cross = 2 * phi**4 * (
        3 * (4**d + 2**d) * phi + 3 * 4**d * phi**2 * ratio_2 + 4 + 2 / n
    )
    return local + cross


def eta_V_limit(rho: float, d: int) -> float:
    """n -> infinity limit of eta_V: both rational factors tend to 2."""
    phi = unit_ball_volume(d) * rho**d
    local = 2 * phi**2 * ((3**d + 1) * phi + 1) ** 2
    local *= 1 + (2**d + 1) * 6**d * phi + 2 * 6 ** (2 * d) * phi**2
    cross = 2 * phi**4 * (3 * (4**d + 2**d) * phi + 6 * 4**d * phi**2 + 4)
    return local + cross


def eta_S(params: ModelParams) -> float:
    """Finite-n conditional-variance constant for the coupling of n - S."""
    params.require("theorem_S_valid")
    d, n, phi = params.d, params.n, params.phi
    kc = kissing_constants(d)
    ratio_3 = (2 * n - 3**d * phi) / (n - 3**d * phi)
    ratio_2 = (2 * n - (2 ** (d + 1) + 1) * phi) / (n - (2 ** (d + 1) + 1) * phi)
    local = 2 * (1 + 2 * kc.kappa) ** 2
    local *= 1 + (2**d + 1) * 3**d * phi + ratio_3 * 9**d * phi**2
    cross = (kc.kappa_plus**2 / 2) * (
        (2**d + 2 * 3**d + 3) * phi
        + (2 ** (d + 1) + 1) * ratio_2 * phi**2
        + (4 * n - 2) / (n - 1)
    )
    return local + cross


def eta_S_limit(rho: float, d: int) -> float:
    """n -> infinity limit of eta_S: the rational factors tend to 2, 2, 4."""
    kc = kissing_constants(d)
    phi = unit_ball_volume(d) * rho**d
    local = 2 * (1 + 2 * kc.kappa) ** 2
    local *= 1 + (2**d + 1) * 3**d * phi + 2 * 9**d * phi**2
    cross = (kc.kappa_plus**2 / 2) * (
        (2**d + 2 * 3**d + 3) * phi + (2 ** (d + 1) + 1) * 2 * phi**2 + 4
    )
    return local + cross


def size_bias_ks_bound(mu: float, sigma2: float, B: float, Delta: float) -> float:
    """Kolmogorov bound (mu / 5 sigma^2) * (sqrt(11 B^2/sigma + 5 Delta) + 2B/sqrt(sigma))^2
    for a size-biased coupling that moves Y by at most B almost surely."""
    if mu <= 0 or sigma2 <= 0 or B <= 0:
        raise ValueError(
            f"mu, sigma2, B must be positive (got {mu}, {sigma2}, {B})"
        )
    if Delta < 0:
        raise ValueError(f"Delta must be nonnegative, got {Delta}")
    sigma = math.sqrt(sigma2)
    core = math.sqrt(11 * B * B / sigma + 5 * Delta) + 2 * B / math.sqrt(sigma)
    return mu / (5 * sigma2) * core * core


def theorem_bound_V(params: ModelParams, moments: MomentSet) -> float:
    """Finite-n Kolmogorov bound for V: the generic bound with B = phi and
    Delta = sqrt(eta_V(n, rho) / n)."""
    eta = eta_V(params)
    return size_bias_ks_bound(
        moments.mu_V, moments.var_V, params.phi, math.sqrt(eta / params.n)
    )


def theorem_bound_S(params: ModelParams, moments: MomentSet) -> float:
    """Finite-n Kolmogorov bound for S.

    The coupling size-biases W = n - S (the nonsingleton count), so the mean
    factor is n - mu_S and the uniform bound is kappa_d + 1.
    """
    eta = eta_S(params)
    kc = kissing_constants(params.d)
    return size_bias_ks_bound(
        params.n - moments.mu_S,
        moments.var_S,
        float(kc.kappa_plus),
        math.sqrt(eta / params.n),
    )


def _delta(limit_prefactor_g: float, B: float, eta_limit: float, phi: float) -> float:
    core = math.sqrt(
        11 * B * B / math.sqrt(limit_prefactor_g) + 5 * math.sqrt(eta_limit)
    ) + 2 * B / limit_prefactor_g**0.25
    return (1 - math.exp(-phi)) / (5 * limit_prefactor_g) * core * core


def delta_V(
    rho: float, d: int, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """Asymptotic constant: limsup of sqrt(n) * D_V is at most delta_V(rho)."""
    if rho <= 0:
        raise ValueError(f"radius must be positive, got {rho}")
    phi = unit_ball_volume(d) * rho**d
    return _delta(g_V(rho, d, spec), phi, eta_V_limit(rho, d), phi)


def delta_S(
    rho: float, d: int, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """Asymptotic constant: limsup of sqrt(n) * D_S is at most delta_S(rho)."""
    if rho <= 0:
        raise ValueError(f"radius must be positive, got {rho}")
    kc = kissing_constants(d)
    phi = unit_ball_volume(d) * rho**d
    return _delta(g_S(rho, d, spec), float(kc.kappa_plus), eta_S_limit(rho, d), phi)


def lower_bound_S(
    rho: float, d: int, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """Asymptotic floor: liminf of sqrt(n) * D_S is at least (8 pi g_S)^(-1/2)."""
    return (8.0 * math.pi * g_S(rho, d, spec)) ** -0.5


def finite_n_lower_bound_S(params: ModelParams, moments: MomentSet) -> float:
    """Finite-n lattice floor (1/2) * sigma_S^{-1} * f_Z(sigma_S^{-1}).

    The source argument carries a (1 - eps) slack with offsets |t_i| bounded
    by sigma_S^{-1}; we report the eps -> 0 value and leave the slack to the
    consumer (the acceptance harness applies a 0.8 safety factor).
    """
    params.require("variance_formulas_valid")
    inv_sigma = 1.0 / math.sqrt(moments.var_S)
    return 0.5 * inv_sigma * std_normal_pdf(inv_sigma)


@dataclass(frozen=True)
class BoundReport:
    """All bound constants for one parameter triple.

    Fields tied to the isolated count are None when d > 3 (kappa_d unknown)
    and the finite-n entries are None when the corresponding theorem
    precondition fails.
    """

    params: ModelParams
    eta_V: float | None
    eta_S: float | None
    D_V_bound: float | None
    D_S_bound: float | None
    eta_V_limit: float
    eta_S_limit: float | None
    delta_V: float
    delta_S: float | None
    lower_S: float | None
    finite_n_lower_S: float | None

    def to_dict(self) -> dict:
        return {
            "d": self.params.d,
            "n": self.params.n,
            "rho": self.params.rho,
            "phi": self.params.phi,
            "validity": self.params.validity(),
            "eta_V": self.eta_V,
            "eta_S": self.eta_S,
            "D_V_bound": self.D_V_bound,
            "D_S_bound": self.D_S_bound,
            "eta_V_limit": self.eta_V_limit,
            "eta_S_limit": self.eta_S_limit,
            "delta_V": self.delta_V,
            "delta_S": self.delta_S,
            "lower_S": self.lower_S,
            "finite_n_lower_S": self.finite_n_lower_S,
        }


def bound_report(
    params: ModelParams,
    moments: MomentSet,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> BoundReport:
    """Evaluate every bound that is defined for ``params``; enforce the ones
    whose preconditions fail as errors only when nothing is computable."""
    if not params.theorem_V_valid:
        params.require("theorem_V_valid")
    has_kappa = params.d in _KAPPA
    s_valid = has_kappa and params.theorem_S_valid
    return BoundReport(
        params=params,
        eta_V=eta_V(params),
        eta_S=eta_S(params) if s_valid else None,
        D_V_bound=theorem_bound_V(params, moments),
        D_S_bound=theorem_bound_S(params, moments) if s_valid else None,
        eta_V_limit=eta_V_limit(params.rho, params.d),
        eta_S_limit=eta_S_limit(params.rho, params.d) if has_kappa else None,
        delta_V=delta_V(params.rho, params.d, spec),
        delta_S=delta_S(params.rho, params.d, spec) if has_kappa else None,
        lower_S=lower_bound_S(params.rho, params.d, spec),
        finite_n_lower_S=(
            finite_n_lower_bound_S(params, moments)
            if params.variance_formulas_valid
            else None
        ),
    )
