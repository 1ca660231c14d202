import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coverstein.analytic import (
    QuadratureSpec,
    _quad,
    g_S,
    g_V,
    integral_J,
    omega,
    std_normal_cdf,
    std_normal_pdf,
    unit_ball_volume,
)
from coverstein.errors import NumericalError

from conftest import J_closed_1d, g_S_closed_1d, g_V_closed_1d, omega1_closed


def test_unit_ball_volumes():
    assert unit_ball_volume(1) == pytest.approx(2.0, abs=1e-15)
    assert unit_ball_volume(2) == pytest.approx(math.pi, abs=1e-14)
    assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0, abs=1e-14)
    # direct Gamma-formula cross-check for the higher dims
    for d in (4, 5):
        assert unit_ball_volume(d) == pytest.approx(
            math.pi ** (d / 2) / math.gamma(1 + d / 2), rel=1e-15
        )


def test_unit_ball_volume_domain():
    with pytest.raises(ValueError):
        unit_ball_volume(0)
    with pytest.raises(ValueError):
        unit_ball_volume(-2)
    with pytest.raises(ValueError):
        unit_ball_volume(6)
    assert unit_ball_volume(6, allow_high_dim=True) > 0


def test_omega_d1_exact():
    for u in np.linspace(0.0, 2.0, 23):
        assert omega(1, u) == 2.0 + u


def test_omega_examples():
    assert omega(1, 0.5) == 2.5
    assert omega(3, 0.0) == pytest.approx(4.0 * math.pi / 3.0, abs=1e-12)
    # d=2, u=1: antiderivative of sqrt(1-t^2/4) gives pi + pi/3 + sqrt(3)/2
    expected = math.pi + math.pi / 3.0 + math.sqrt(3.0) / 2.0
    assert omega(2, 1.0) == pytest.approx(expected, abs=1e-11)


def test_omega_domain():
    with pytest.raises(ValueError):
        omega(2, -0.1)
    with pytest.raises(ValueError):
        omega(2, 2.5)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
def test_omega_monotone_and_bounded(d):
    grid = np.linspace(0.0, 2.0, 41)
    values = [omega(d, u) for u in grid]
    pid = unit_ball_volume(d)
    assert values[0] == pytest.approx(pid, abs=1e-11)
    assert values[-1] == pytest.approx(2.0 * pid, abs=1e-10)
    for lo, hi in zip(values, values[1:]):
        assert hi >= lo - 1e-12
    assert all(pid - 1e-11 <= v <= 2.0 * pid + 1e-10 for v in values)


def test_integral_J_trivial_cases():
    assert integral_J(0.0, 2, 1.0) == 0.0
    # rho = 0 makes the exponential factor 1, leaving pi_d * r^d
    assert integral_J(2.0, 1, 0.0) == pytest.approx(4.0, abs=1e-12)


def test_integral_J_d1_closed_form():
    for rho in (0.3, 1.0, 2.0):
        for r in (0.5, 1.0, 2.0):
            assert integral_J(r, 1, rho) == pytest.approx(
                J_closed_1d(r, rho), abs=1e-10
            )


@pytest.mark.parametrize("d", [1, 2, 3])
def test_integral_J_monotone_and_bounded(d):
    rho = 0.8
    prev = 0.0
    for r in np.linspace(0.1, 2.0, 12):
        val = integral_J(float(r), d, rho)
        assert val >= prev - 1e-12
        assert val <= unit_ball_volume(d) * r**d + 1e-10
        prev = val


def test_g_V_d1_closed_form():
    for rho in (0.5, 1.0, 1.7):
        assert g_V(rho, 1) == pytest.approx(g_V_closed_1d(rho), abs=1e-10)


def test_g_S_d1_closed_form():
    for rho in (0.5, 1.0, 1.7):
        assert g_S(rho, 1) == pytest.approx(g_S_closed_1d(rho), abs=1e-10)


@pytest.mark.parametrize("d", [2, 3])
def test_g_positive_higher_dims(d):
    assert g_V(1.0, d) > 0
    assert g_S(1.0, d) > 0


def test_g_S_small_rho_limit():
    value = g_S(1e-4, 2)
    assert 0 < value < 1e-3


def test_normal_cdf_pdf_basics():
    assert std_normal_cdf(0.0) == pytest.approx(0.5, abs=1e-16)
    assert std_normal_pdf(0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-16)
    assert std_normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-15)


def test_normal_cdf_high_precision_oracle():
    mp.mp.dps = 30
    for t in np.linspace(-8.0, 8.0, 321):
        exact = float(mp.ncdf(mp.mpf(float(t))))
        assert abs(std_normal_cdf(float(t)) - exact) < 1e-15


def test_normal_cdf_symmetry_and_monotone():
    grid = np.linspace(-10, 10, 201)
    vals = [std_normal_cdf(t) for t in grid]
    for lo, hi in zip(vals, vals[1:]):
        assert hi >= lo
    for t in grid:
        assert abs(std_normal_cdf(t) + std_normal_cdf(-t) - 1.0) < 1e-14


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(absolute_tolerance=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(relative_tolerance=-1.0)
    with pytest.raises(ValueError):
        QuadratureSpec(max_subdivisions=0)


def test_quadrature_nonconvergence_carries_error_estimate():
    spec = QuadratureSpec(
        absolute_tolerance=1e-300, relative_tolerance=1e-300, max_subdivisions=2
    )
    with pytest.raises(NumericalError) as info:
        _quad(lambda t: math.sqrt(abs(math.sin(37.0 / (t + 1e-3)))), 0.0, 2.0, spec)
    assert info.value.achieved_error is not None
    assert info.value.achieved_error > 0


@settings(max_examples=60, deadline=None)
@given(
    d=st.integers(min_value=2, max_value=5),
    u=st.floats(min_value=0.0, max_value=2.0, allow_nan=False),
)
def test_omega_stays_in_envelope(d, u):
    pid = unit_ball_volume(d)
    val = omega(d, u)
    assert pid - 1e-10 <= val <= 2 * pid + 1e-10
