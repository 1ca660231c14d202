"""Shared independent oracles for the test suite.

Everything here is derived by hand or brute force, deliberately NOT by
calling back into the package: closed forms for d=1, exhaustive-shift torus
distances, O(n^2) neighbor scans, and exact rational binomial arithmetic.
"""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest


# ---------------------------------------------------------------------------
# closed forms for d = 1 (grain radius rho, phi = 2*rho)


def omega1_closed(u: float) -> float:
    return 2.0 + u


def J_closed_1d(r: float, rho: float) -> float:
    """2 * int_0^r exp(-rho*(2+t)) dt = 2*exp(-2 rho)*(1-exp(-rho r))/rho."""
    return 2.0 * math.exp(-2.0 * rho) * -math.expm1(-rho * r) / rho


def g_V_closed_1d(rho: float) -> float:
    phi = 2.0 * rho
    return rho * J_closed_1d(2.0, rho) - (2.0 * phi + phi * phi) * math.exp(-2.0 * phi)


def g_S_closed_1d(rho: float) -> float:
    phi = 2.0 * rho
    return (
        math.exp(-phi)
        - (1.0 + phi * phi) * math.exp(-2.0 * phi)
        + rho * (J_closed_1d(2.0, rho) - J_closed_1d(1.0, rho))
    )


# ---------------------------------------------------------------------------
# brute-force torus geometry


def brute_toroidal_distance(x, y, side: float) -> float:
    """Minimum Euclidean distance over all 3^d integer shifts of y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    best = math.inf
    for shift in itertools.product((-1.0, 0.0, 1.0), repeat=len(x)):
        cand = math.sqrt(((x - (y + side * np.asarray(shift))) ** 2).sum())
        best = min(best, cand)
    return best


def brute_neighbors(points: np.ndarray, center: np.ndarray, side: float, r: float):
    delta = np.abs(points - center)
    delta = np.minimum(delta, side - delta)
    return np.flatnonzero((delta**2).sum(axis=1) <= r * r)


def brute_pairs(points: np.ndarray, side: float, r: float):
    out = []
    for i in range(len(points)):
        delta = np.abs(points[i + 1 :] - points[i])
        delta = np.minimum(delta, side - delta)
        hits = np.flatnonzero((delta**2).sum(axis=1) <= r * r)
        out.extend((i, i + 1 + int(j)) for j in hits)
    return sorted(out)


def brute_isolated_count(points: np.ndarray, side: float, rho: float) -> int:
    n = len(points)
    lonely = 0
    for i in range(n):
        delta = np.abs(points - points[i])
        delta = np.minimum(delta, side - delta)
        d2 = (delta**2).sum(axis=1)
        d2[i] = math.inf
        if d2.min() > rho * rho:
            lonely += 1
    return lonely


def interval_union_length_1d(xs: np.ndarray, side: float, rho: float) -> float:
    """From-scratch circular interval merge: split each arc at the seam,
    then sweep a plain linear merge over [0, side)."""
    fragments = []
    for x in np.asarray(xs).ravel():
        start = (x - rho) % side
        end = start + 2.0 * rho
        if end <= side:
            fragments.append((start, end))
        else:
            fragments.append((start, side))
            fragments.append((0.0, end - side))
    fragments.sort()
    total = 0.0
    cur_a, cur_b = None, None
    for a, b in fragments:
        if cur_b is None or a > cur_b:
            if cur_b is not None:
                total += cur_b - cur_a
            cur_a, cur_b = a, b
        else:
            cur_b = max(cur_b, b)
    if cur_b is not None:
        total += cur_b - cur_a
    return total


# ---------------------------------------------------------------------------
# exact rational binomial arithmetic


def binom_pmf_exact(m: int, p: Fraction, k: int) -> Fraction:
    return Fraction(math.comb(m, k)) * p**k * (1 - p) ** (m - k)


def binom_sf_exact(m: int, p: Fraction, k: int) -> Fraction:
    """P[N > k] exactly."""
    return sum(binom_pmf_exact(m, p, j) for j in range(k + 1, m + 1))


def pi_k_exact(m: int, p: Fraction, k: int) -> Fraction:
    """The defining expression, not the simplified product form."""
    if k == m:
        return Fraction(0)
    p0 = binom_pmf_exact(m, p, 0)
    sf = binom_sf_exact(m, p, k)
    conditioned = sf / (1 - p0)
    return (conditioned - sf) / (binom_pmf_exact(m, p, k) * (1 - Fraction(k, m)))


# ---------------------------------------------------------------------------
# statistics helpers


def chi_square_pvalue(observed: np.ndarray, expected: np.ndarray) -> float:
    """Pearson chi-square against given expected counts, tail bins merged so
    every expected count is >= 5."""
    from scipy import stats as sps

    obs, exp = [], []
    acc_o, acc_e = 0.0, 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5.0:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o, acc_e = 0.0, 0.0
    if acc_e > 0:
        if exp:
            obs[-1] += acc_o
            exp[-1] += acc_e
        else:
            obs.append(acc_o)
            exp.append(acc_e)
    obs = np.asarray(obs)
    exp = np.asarray(exp)
    # normalize tiny drift between totals
    exp = exp * obs.sum() / exp.sum()
    stat = float(((obs - exp) ** 2 / exp).sum())
    return float(sps.chi2.sf(stat, df=len(obs) - 1))


@pytest.fixture(scope="session")
def cpu_budget_factor() -> float:
    """Scale stated 8-core runtime budgets to this machine."""
    import os

    cores = os.cpu_count() or 1
    return max(1.0, 8.0 / cores)
