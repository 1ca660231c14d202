import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coverstein.errors import ValidityError
from coverstein.geometry import (
    ModelParams,
    _covered_mask_numpy,
    configuration_from_points,
    covered_mask,
    load_points,
    neighbors_within,
    pairs_within,
    sample_configuration,
    save_points,
    toroidal_distance,
)

from conftest import (
    brute_neighbors,
    brute_pairs,
    brute_toroidal_distance,
    chi_square_pvalue,
)


# ---------------------------------------------------------------------------
# ModelParams


def test_params_derived_quantities():
    p = ModelParams(d=2, n=100, rho=1.0)
    assert p.side == pytest.approx(10.0)
    assert p.phi == pytest.approx(math.pi)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(d=0, n=100, rho=1.0)
    with pytest.raises(ValueError):
        ModelParams(d=1, n=3, rho=1.0)
    with pytest.raises(ValueError):
        ModelParams(d=1, n=100, rho=0.0)
    with pytest.raises(ValueError):
        ModelParams(d=6, n=100, rho=1.0)
    assert ModelParams(d=6, n=100, rho=0.1, allow_high_dim=True).d == 6


def test_validity_flags():
    p = ModelParams(d=1, n=100, rho=1.0)  # side 100, phi 2
    assert p.mean_formulas_valid and p.variance_formulas_valid
    assert p.theorem_V_valid and p.theorem_S_valid
    tight = ModelParams(d=1, n=10, rho=3.0)  # side 10, 4*rho = 12 >= 10
    assert tight.mean_formulas_valid
    assert not tight.variance_formulas_valid
    with pytest.raises(ValidityError, match="4\\*rho"):
        tight.require("variance_formulas_valid")


def test_theorem_flags_track_phi():
    p = ModelParams(d=1, n=10, rho=1.0)  # 6*phi = 12 > 10
    assert not p.theorem_V_valid
    with pytest.raises(ValidityError, match="6\\^d"):
        p.require("theorem_V_valid")


# ---------------------------------------------------------------------------
# toroidal distance


def test_distance_trivial():
    x = np.array([1.0, 2.0])
    assert toroidal_distance(x, x, 10.0) == 0.0
    assert toroidal_distance(np.array([0.5]), np.array([9.5]), 10.0) == pytest.approx(
        1.0
    )


def test_distance_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        toroidal_distance(np.array([1.0]), np.array([1.0, 2.0]), 10.0)


def test_distance_against_shift_enumeration():
    rng = np.random.default_rng(5)
    for d in (1, 2, 3):
        side = 7.3
        for _ in range(60):
            x = rng.random(d) * side
            y = rng.random(d) * side
            assert toroidal_distance(x, y, side) == pytest.approx(
                brute_toroidal_distance(x, y, side), abs=1e-12
            )


@settings(max_examples=120, deadline=None)
@given(
    data=st.lists(
        st.floats(min_value=0.0, max_value=9.999), min_size=6, max_size=6
    )
)
def test_distance_symmetry_and_triangle(data):
    side = 10.0
    x = np.array(data[0:2])
    y = np.array(data[2:4])
    z = np.array(data[4:6])
    dxy = toroidal_distance(x, y, side)
    assert dxy == pytest.approx(toroidal_distance(y, x, side), abs=1e-12)
    assert dxy <= toroidal_distance(x, z, side) + toroidal_distance(z, y, side) + 1e-9
    assert dxy <= math.sqrt(2.0) / 2.0 * side + 1e-12


# ---------------------------------------------------------------------------
# sampling


def test_sampling_determinism():
    p = ModelParams(d=2, n=50, rho=1.0)
    a = sample_configuration(p, seed=9)
    b = sample_configuration(p, seed=9)
    assert np.array_equal(a.points, b.points)
    c = sample_configuration(p, seed=10)
    assert not np.array_equal(a.points, c.points)


def test_sampling_coordinate_means():
    p = ModelParams(d=2, n=100_000, rho=1.0)
    config = sample_configuration(p, seed=123)
    se = p.side / math.sqrt(12.0 * p.n)
    for axis in range(2):
        assert abs(config.points[:, axis].mean() - p.side / 2.0) < 4.0 * se


def test_subbox_counts_binomial():
    # count in a fixed box of volume v is Binomial(n, v/n)
    from scipy.stats import binom

    p = ModelParams(d=2, n=100, rho=1.0)
    box_hi = 0.2 * p.side  # box volume fraction 0.04
    prob = 0.04
    counts = np.zeros(101, dtype=np.int64)
    reps = 2000
    for r in range(reps):
        config = sample_configuration(p, seed=777, stream_index=r)
        inside = np.all(config.points < box_hi, axis=1).sum()
        counts[inside] += 1
    expected = binom.pmf(np.arange(101), 100, prob) * reps
    assert chi_square_pvalue(counts, expected) > 0.01


# ---------------------------------------------------------------------------
# grid index vs brute force


def test_index_matches_brute_force_many_cases():
    rng = np.random.default_rng(21)
    cases = 0
    while cases < 1000:
        d = int(rng.integers(1, 4))
        n = int(rng.integers(4, 201))
        rho = float(rng.uniform(0.2, 1.5))
        p = ModelParams(d=d, n=n, rho=rho)
        if p.side <= 2 * rho:  # keep r <= 3*rho meaningful on tiny tori
            continue
        pts = rng.random((n, d)) * p.side
        config = configuration_from_points(p, pts)
        r = float(rng.uniform(0.0, 3.0 * rho))
        r = min(r, 0.5 * math.sqrt(d) * p.side * 0.999)
        center = rng.random(d) * p.side
        ids = neighbors_within(config, center, r)
        assert np.array_equal(ids, brute_neighbors(pts, center, p.side, r))
        i, j = pairs_within(config, r)
        got = sorted(zip(i.tolist(), j.tolist()))
        assert got == brute_pairs(pts, p.side, r)
        cases += 1


def test_neighbors_trivial_cases():
    p = ModelParams(d=2, n=10, rho=1.0)
    config = sample_configuration(p, seed=3)
    # r = 0 at a non-data point: empty
    assert len(neighbors_within(config, np.array([0.123, 0.456]), 0.0)) == 0
    # center equal to point i contains i for any r
    for i in (0, 7):
        ids = neighbors_within(config, config.points[i], 0.0)
        assert i in ids


def test_neighbors_query_radius_guard():
    p = ModelParams(d=2, n=10, rho=1.0)
    config = sample_configuration(p, seed=3)
    with pytest.raises(ValueError, match="exceeds"):
        neighbors_within(config, np.array([0.0, 0.0]), 100.0)
    with pytest.raises(ValueError, match="mismatch"):
        neighbors_within(config, np.array([0.0]), 1.0)


def test_covered_mask_paths_agree():
    rng = np.random.default_rng(4)
    for d, n, rho, r in ((1, 30, 0.7, 1.4), (2, 80, 1.0, 1.0), (3, 50, 1.0, 2.0)):
        p = ModelParams(d=d, n=n, rho=rho)
        pts = rng.random((n, d)) * p.side
        config = configuration_from_points(p, pts)
        queries = rng.random((2000, d)) * p.side
        fast = covered_mask(config, queries, r)
        slow = _covered_mask_numpy(config, queries, r)
        brute = np.array(
            [len(brute_neighbors(pts, q, p.side, r)) > 0 for q in queries]
        )
        assert np.array_equal(fast, slow)
        assert np.array_equal(fast, brute)


# ---------------------------------------------------------------------------
# dump/load


def test_save_load_roundtrip(tmp_path):
    p = ModelParams(d=3, n=20, rho=1.0)
    config = sample_configuration(p, seed=1)
    for fmt in ("bin", "csv"):
        path = tmp_path / f"pts.{fmt}"
        save_points(config.points, str(path), fmt)
        back = load_points(str(path), d=3, fmt=fmt)
        assert np.array_equal(back, config.points)
    with pytest.raises(ValueError, match="format"):
        save_points(config.points, str(tmp_path / "x"), "json")


def test_configuration_from_points_validation():
    p = ModelParams(d=2, n=5, rho=1.0)
    with pytest.raises(ValueError, match="shape"):
        configuration_from_points(p, np.zeros((4, 2)))
    bad = np.zeros((5, 2))
    bad[0, 0] = p.side  # exactly side is out of the half-open box
    with pytest.raises(ValueError, match="side"):
        configuration_from_points(p, bad)
