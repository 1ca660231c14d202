"""Size-biased coupling constructions.

The conditioned-binomial coupling (a Bernoulli-patched binomial whose law is
the binomial conditioned positive), the point-process couplings it drives for
the covered volume V and the nonsingleton count W = n - S, and a nested
Monte Carlo estimator for Delta = sqrt(Var E[Y' - Y | Y]).

The estimator conditions on the full point configuration rather than on the
scalar Y; by the conditional variance inequality this over-estimates the
target, which is the safe direction when checking the paper-style upper
bounds n^{-1} eta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import rng
from .bounds import eta_S, eta_V
from .errors import NumericalError
from .geometry import (
    ModelParams,
    configuration_from_points,
    neighbors_within,
)
from .simulate import VolumeMethod, covered_volume, isolated_count

__all__ = [
    "pi_k",
    "dominance_check",
    "couple_binomial",
    "couple_binomial_batch",
    "CouplingDraw",
    "size_biased_pair_V",
    "size_biased_pair_W",
    "coupling_batch",
    "size_bias_identity_check",
    "DeltaEstimate",
    "estimate_delta",
    "draws_to_csv",
]

_MAX_TAIL_TERMS = 1_000_000


def _binom_logpmf(m: int, p: float, k) -> np.ndarray:
    from scipy.special import gammaln

    k = np.asarray(k, dtype=float)
    return (
        gammaln(m + 1)
        - gammaln(k + 1)
        - gammaln(m - k + 1)
        + k * math.log(p)
        + (m - k) * math.log1p(-p)
    )


def _binom_log_sf(m: int, p: float, k: int) -> float:
    """log P[N > k] for N ~ Bin(m, p), by summing the smaller tail directly.

    Direct accumulation avoids the 1 - x cancellation: the upper tail is
    summed when k is at or beyond the mean, otherwise the lower tail is
    summed and complemented (both tails are O(1) there).
    """
    if k >= m:
        return -math.inf
    if k < 0:
        return 0.0
    mean = m * p
    if k + 1 >= mean:
        # upper tail: terms decay past the mode
        hi = min(m, k + 1 + _MAX_TAIL_TERMS)
        js = np.arange(k + 1, hi + 1)
        terms = _binom_logpmf(m, p, js)
        best = terms.max()
        # terms are monotone decreasing here; everything past 60 nats is noise
        cut = terms >= best - 60.0
        if hi < m and cut[-1]:
            raise NumericalError(
                f"binomial tail accumulation exceeded {_MAX_TAIL_TERMS} terms "
                f"(m={m}, p={p}, k={k})"
            )
        terms = terms[cut]
        return float(best + math.log(np.exp(terms - best).sum()))
    if k > _MAX_TAIL_TERMS:
        raise NumericalError(
            f"binomial lower-tail accumulation exceeded {_MAX_TAIL_TERMS} terms "
            f"(m={m}, p={p}, k={k})"
        )
    js = np.arange(0, k + 1)
    terms = _binom_logpmf(m, p, js)
    best = terms.max()
    log_cdf = float(best + math.log(np.exp(terms - best).sum()))
    if log_cdf >= 0.0:
        return -math.inf
    return math.log(-math.expm1(log_cdf))


def pi_k(m: int, p: float, k: int) -> float:
    """Patch probability for the conditioned-binomial coupling.

    pi_m = 0; otherwise (P[N>k | N>0] - P[N>k]) / (P[N=k] (1 - k/m)), which
    simplifies to the all-positive product
    P[N>k] * P[N=0] / (P[N>0] * P[N=k] * (1 - k/m)) and is evaluated on the
    log scale. Values are clamped to [0, 1] only within 1e-9 of the
    boundary; larger excursions raise.
    """
    if m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if k < 0 or k > m:
        raise ValueError(f"k must lie in [0, {m}], got {k}")
    if k == m:
        return 0.0
    log_p0 = m * math.log1p(-p)
    log_pos = math.log(-math.expm1(log_p0))
    log_val = (
        _binom_log_sf(m, p, k)
        + log_p0
        - log_pos
        - float(_binom_logpmf(m, p, k))
        - math.log1p(-k / m)
    )
    value = math.exp(log_val)
    if value > 1.0 + 1e-9 or value < -1e-9:
        raise NumericalError(
            f"pi_k({m}, {p}, {k}) = {value} escaped [0, 1] beyond the clamp",
            achieved_error=max(value - 1.0, -value),
        )
    return min(max(value, 0.0), 1.0)


def _pi_table(m: int, p: float, k_max: int) -> np.ndarray:
    return np.array([pi_k(m, p, k) for k in range(min(k_max, m) + 1)])


def dominance_check(m: int, p: float) -> bool:
    """Exact stochastic-dominance chain for the conditioned binomial.

    Verifies P[N >= k] <= P[N >= k | N > 0] <= P[N'' >= k] for every
    k in 1..m, where N'' - 1 ~ Bin(m-1, p), in exact rational arithmetic.
    Always true mathematically; exists as a regression oracle for pi_k.
    """
    if m < 1 or m > 60:
        raise ValueError(f"m must lie in [1, 60] for exact tails, got {m}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    pf = Fraction(p)
    qf = 1 - pf

    def tail(mm: int, k: int) -> Fraction:
        # P[Bin(mm, pf) >= k]
        if k <= 0:
            return Fraction(1)
        return sum(
            Fraction(math.comb(mm, j)) * pf**j * qf ** (mm - j)
            for j in range(k, mm + 1)
        )

    p_pos = 1 - qf**m
    for k in range(1, m + 1):
        plain = tail(m, k)
        conditioned = plain / p_pos
        shifted = tail(m - 1, k - 1)
        if not (plain <= conditioned <= shifted):
            return False
    return True


def couple_binomial_batch(
    m: int, p: float, count: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized draws of (N, M): N a sum of m explicit Bernoulli(p)
    indicators, M = N + (1 - xi_I) * B with B ~ Bernoulli(pi_N) and I
    uniform, so that M is distributed as N conditioned positive."""
    if count < 1:
        raise ValueError("count must be >= 1")
    gen = rng.stream(seed, rng.DOMAIN_BINOMIAL, 0)
    draws_n = np.empty(count, dtype=np.int64)
    draws_m = np.empty(count, dtype=np.int64)
    table: np.ndarray | None = None
    chunk = max(1, min(count, (1 << 25) // max(m, 1)))
    done = 0
    while done < count:
        take = min(chunk, count - done)
        xi = gen.random((take, m)) < p
        n_vals = xi.sum(axis=1)
        top = int(n_vals.max())
        if table is None or len(table) <= top:
            table = _pi_table(m, p, top)
        bern = gen.random(take) < table[n_vals]
        idx = gen.integers(0, m, size=take)
        xi_at_idx = xi[np.arange(take), idx]
        draws_n[done : done + take] = n_vals
        draws_m[done : done + take] = n_vals + (bern & ~xi_at_idx)
        done += take
    return draws_n, draws_m


def couple_binomial(m: int, p: float, seed: int) -> tuple[int, int]:
    n_arr, m_arr = couple_binomial_batch(m, p, 1, seed)
    return int(n_arr[0]), int(m_arr[0])


@dataclass(frozen=True)
class CouplingDraw:
    """One coupled pair (Y, Y') with the randomness that produced it.

    ``moved_index`` is the relocated point when the Bernoulli fired (the
    construction moves the selected point whether or not it already lay in
    the anchor ball); ``target`` is the uniform point drawn in the ball.
    """

    y: float
    y_prime: float
    anchor: np.ndarray
    bernoulli: bool
    moved_index: int | None
    target: np.ndarray | None


def _uniform_in_ball(gen: np.random.Generator, d: int, rho: float) -> np.ndarray:
    direction = gen.standard_normal(d)
    norm = float(np.sqrt((direction**2).sum()))
    if norm == 0.0:
        direction = np.zeros(d)
        direction[0] = 1.0
        norm = 1.0
    radius = rho * gen.random() ** (1.0 / d)
    return direction / norm * radius


def _draw_pair_V(
    params: ModelParams,
    seed: int,
    stream_index: int,
    method: VolumeMethod,
) -> tuple[CouplingDraw, int]:
    """Anchor-ball coupling for V; returns the draw and the number of points
    of the modified configuration inside the anchor ball."""
    gen = rng.stream(seed, rng.DOMAIN_COUPLING, stream_index)
    n, d, side, rho = params.n, params.d, params.side, params.rho
    anchor = gen.random(d) * side
    points = gen.random((n, d)) * side
    config = configuration_from_points(params, points)
    in_ball = neighbors_within(config, anchor, rho)
    count = len(in_ball)
    prob = pi_k(n, params.phi / n, count)
    fired = bool(gen.random() < prob)
    target = np.mod(anchor + _uniform_in_ball(gen, d, rho), side)
    y = covered_volume(config, rho, method)
    if not fired:
        return (
            CouplingDraw(y, y, anchor, False, None, target),
            count,
        )
    moved = int(gen.integers(0, n))
    shifted = points.copy()
    shifted[moved] = target
    config2 = configuration_from_points(params, shifted)
    y_prime = covered_volume(config2, rho, method)
    count_after = len(neighbors_within(config2, anchor, rho))
    return CouplingDraw(y, y_prime, anchor, True, moved, target), count_after


def _draw_pair_W(
    params: ModelParams, seed: int, stream_index: int
) -> tuple[CouplingDraw, int]:
    """Anchor-point coupling for W = n - S with m = n - 1 free points."""
    gen = rng.stream(seed, rng.DOMAIN_COUPLING, stream_index)
    n, d, side, rho = params.n, params.d, params.side, params.rho
    m = n - 1
    anchor = gen.random(d) * side
    free = gen.random((m, d)) * side
    base = configuration_from_points(params, np.vstack([free, anchor[None, :]]))
    # neighbors of the anchor among the free points only
    in_ball = neighbors_within(base, anchor, rho)
    count = int((in_ball < m).sum())
    prob = pi_k(m, params.phi / n, count)
    fired = bool(gen.random() < prob)
    target = np.mod(anchor + _uniform_in_ball(gen, d, rho), side)
    y = float(n - isolated_count(base, rho))
    if not fired:
        return CouplingDraw(y, y, anchor, False, None, target), count
    moved = int(gen.integers(0, m))
    shifted = free.copy()
    shifted[moved] = target
    config2 = configuration_from_points(params, np.vstack([shifted, anchor[None, :]]))
    y_prime = float(n - isolated_count(config2, rho))
    count_after = int((neighbors_within(config2, anchor, rho) < m).sum())
    return CouplingDraw(y, y_prime, anchor, True, moved, target), count_after


def size_biased_pair_V(
    params: ModelParams,
    seed: int,
    method: VolumeMethod | None = None,
    stream_index: int = 0,
) -> CouplingDraw:
    """One coupled draw (V, V'): V' has the V size-biased law, and the two
    configurations differ by at most one relocated point, so |V' - V| <= phi."""
    params.require("mean_formulas_valid")
    method = method or VolumeMethod.auto(params.d)
    draw, _ = _draw_pair_V(params, seed, stream_index, method)
    return draw


def size_biased_pair_W(
    params: ModelParams, seed: int, stream_index: int = 0
) -> CouplingDraw:
    """One coupled draw (W, W') for the nonsingleton count; both values are
    integers and |W' - W| <= kappa_d + 1."""
    params.require("mean_formulas_valid")
    if params.d > 3:
        raise ValueError(f"W couplings need kappa_d, unavailable for d={params.d}")
    draw, _ = _draw_pair_W(params, seed, stream_index)
    return draw


def _coupling_block(args) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    params, variant, seed, lo, hi, method = args
    size = hi - lo
    y = np.empty(size)
    y_prime = np.empty(size)
    fired = np.zeros(size, dtype=bool)
    ball_after = np.empty(size, dtype=np.int64)
    for k, r in enumerate(range(lo, hi)):
        if variant == "V":
            draw, count_after = _draw_pair_V(params, seed, r, method)
        else:
            draw, count_after = _draw_pair_W(params, seed, r)
        y[k] = draw.y
        y_prime[k] = draw.y_prime
        fired[k] = draw.bernoulli
        ball_after[k] = count_after
    return y, y_prime, fired, ball_after


def coupling_batch(
    params: ModelParams,
    variant: str,
    count: int,
    seed: int,
    method: VolumeMethod | None = None,
    parallelism: int = 1,
) -> dict[str, np.ndarray]:
    """``count`` independent coupling draws; returns arrays y, y_prime,
    bernoulli, and the post-move anchor-ball occupancy (>= 1 for every
    fired V draw, by construction)."""
    if variant not in ("V", "W"):
        raise ValueError(f"variant must be 'V' or 'W', got {variant!r}")
    params.require("mean_formulas_valid")
    if variant == "W" and params.d > 3:
        raise ValueError(f"W couplings need kappa_d, unavailable for d={params.d}")
    method = method or VolumeMethod.auto(params.d)
    if parallelism == 1 or count < 4:
        y, yp, fired, after = _coupling_block((params, variant, seed, 0, count, method))
    else:
        from concurrent.futures import ProcessPoolExecutor

        chunk = max(1, math.ceil(count / (parallelism * 4)))
        blocks = [
            (params, variant, seed, lo, min(lo + chunk, count), method)
            for lo in range(0, count, chunk)
        ]
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            parts = list(pool.map(_coupling_block, blocks))
        y = np.concatenate([p[0] for p in parts])
        yp = np.concatenate([p[1] for p in parts])
        fired = np.concatenate([p[2] for p in parts])
        after = np.concatenate([p[3] for p in parts])
    return {"y": y, "y_prime": yp, "bernoulli": fired, "ball_count_after": after}


def size_bias_identity_check(
    y: np.ndarray,
    y_prime: np.ndarray,
    n_boot: int = 400,
    seed: int = 0,
) -> dict:
    """Check E[g(Y')] = E[Y g(Y)] / E[Y] for g(y) = y and g(y) = y^2.

    The comparison reuses the base samples of the same draws; the paired
    bootstrap therefore accounts for the correlation between both sides.
    """
    gen = rng.stream(seed, rng.DOMAIN_BOOTSTRAP, 0)
    out = {}
    for name, g in (("g=y", lambda v: v), ("g=y^2", lambda v: v * v)):
        lhs = g(y_prime).mean()
        rhs = (y * g(y)).mean() / y.mean()
        diffs = np.empty(n_boot)
        for b in range(n_boot):
            idx = gen.integers(0, len(y), size=len(y))
            yy, pp = y[idx], y_prime[idx]
            diffs[b] = g(pp).mean() - (yy * g(yy)).mean() / yy.mean()
        se = float(diffs.std(ddof=1))
        diff = float(lhs - rhs)
        out[name] = {
            "size_biased_mean": float(lhs),
            "identity_value": float(rhs),
            "difference": diff,
            "std_error": se,
            "z": diff / se if se > 0 else math.inf,
        }
    return out


@dataclass(frozen=True)
class DeltaEstimate:
    variant: str
    params: ModelParams
    delta_hat: float
    std_error: float
    bound: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "n": self.params.n,
            "d": self.params.d,
            "rho": self.params.rho,
            "delta_hat": self.delta_hat,
            "std_error": self.std_error,
            "bound": self.bound,
            "degenerate": self.degenerate,
        }


def _delta_inner_V(
    params: ModelParams,
    config,
    base_volume: float,
    method: VolumeMethod,
    gen: np.random.Generator,
) -> float:
    n, d, side, rho = params.n, params.d, params.side, params.rho
    anchor = gen.random(d) * side
    count = len(neighbors_within(config, anchor, rho))
    if not gen.random() < pi_k(n, params.phi / n, count):
        return 0.0
    target = np.mod(anchor + _uniform_in_ball(gen, d, rho), side)
    moved = int(gen.integers(0, n))
    shifted = config.points.copy()
    shifted[moved] = target
    return covered_volume(configuration_from_points(params, shifted), rho, method) - base_volume


def _delta_inner_W(
    params: ModelParams,
    config,
    base_w: float,
    gen: np.random.Generator,
) -> float:
    n, d, side, rho = params.n, params.d, params.side, params.rho
    points = config.points
    i = int(gen.integers(0, n))
    count = len(neighbors_within(config, points[i], rho)) - 1  # exclude i itself
    if not gen.random() < pi_k(n - 1, params.phi / n, count):
        return 0.0
    target = np.mod(points[i] + _uniform_in_ball(gen, d, rho), side)
    j = int(gen.integers(0, n - 1))
    if j >= i:
        j += 1
    shifted = points.copy()
    shifted[j] = target
    w_prime = n - isolated_count(configuration_from_points(params, shifted), rho)
    return float(w_prime) - base_w


def _delta_outer_block(args) -> tuple[np.ndarray, np.ndarray]:
    params, variant, seed, lo, hi, inner_m, method = args
    means = np.empty(hi - lo)
    variances = np.empty(hi - lo)
    for k, r in enumerate(range(lo, hi)):
        cfg_gen = rng.stream(seed, rng.DOMAIN_DELTA_CONFIG, r)
        points = cfg_gen.random((params.n, params.d)) * params.side
        config = configuration_from_points(params, points)
        if variant == "V":
            base = covered_volume(config, params.rho, method)
        else:
            base = float(params.n - isolated_count(config, params.rho))
        diffs = np.empty(inner_m)
        for m_idx in range(inner_m):
            gen = rng.stream(seed, rng.DOMAIN_DELTA_INNER, r * inner_m + m_idx)
            if variant == "V":
                diffs[m_idx] = _delta_inner_V(params, config, base, method, gen)
            else:
                diffs[m_idx] = _delta_inner_W(params, config, base, gen)
        means[k] = diffs.mean()
        variances[k] = diffs.var(ddof=1)
    return means, variances


def estimate_delta(
    params: ModelParams,
    variant: str,
    outer_r: int,
    inner_m: int,
    seed: int,
    method: VolumeMethod | None = None,
    parallelism: int = 1,
    n_boot: int = 200,
) -> DeltaEstimate:
    """Nested estimator of Delta = sqrt(Var E[Y' - Y | configuration]).

    The outer loop samples configurations; the inner loop redraws the
    coupling randomness with the configuration held fixed. The raw
    between-configuration variance of inner means over-counts by the
    leftover inner noise E[within-variance] / M, which is subtracted before
    the square root; a negative corrected value reports 0 with the
    degenerate flag. Standard error by outer bootstrap.
    """
    if variant not in ("V", "W"):
        raise ValueError(f"variant must be 'V' or 'W', got {variant!r}")
    if outer_r < 100 or inner_m < 100:
        raise ValueError("estimate_delta needs outer_r >= 100 and inner_m >= 100")
    params.require("mean_formulas_valid")
    method = method or VolumeMethod.auto(params.d)
    if variant == "V":
        bound = math.sqrt(eta_V(params) / params.n)
    else:
        bound = math.sqrt(eta_S(params) / params.n)

    if parallelism == 1:
        means, variances = _delta_outer_block(
            (params, variant, seed, 0, outer_r, inner_m, method)
        )
    else:
        from concurrent.futures import ProcessPoolExecutor

        chunk = max(1, math.ceil(outer_r / (parallelism * 4)))
        blocks = [
            (params, variant, seed, lo, min(lo + chunk, outer_r), inner_m, method)
            for lo in range(0, outer_r, chunk)
        ]
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            parts = list(pool.map(_delta_outer_block, blocks))
        means = np.concatenate([p[0] for p in parts])
        variances = np.concatenate([p[1] for p in parts])

    correction = float(variances.mean()) / inner_m
    raw = float(means.var(ddof=1))
    corrected = raw - correction
    degenerate = corrected < 0
    delta_hat = math.sqrt(max(corrected, 0.0))

    gen = rng.stream(seed, rng.DOMAIN_BOOTSTRAP, 1)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        idx = gen.integers(0, outer_r, size=outer_r)
        c = float(means[idx].var(ddof=1)) - float(variances[idx].mean()) / inner_m
        boots[b] = math.sqrt(max(c, 0.0))
    std_error = float(boots.std(ddof=1))
    return DeltaEstimate(variant, params, delta_hat, std_error, bound, degenerate)


def draws_to_csv(y: np.ndarray, y_prime: np.ndarray, bernoulli: np.ndarray) -> str:
    lines = ["y,y_prime,bernoulli"]
    for a, b, f in zip(y, y_prime, bernoulli):
        lines.append(f"{a:.17g},{b:.17g},{int(f)}")
    return "\n".join(lines) + "\n"
