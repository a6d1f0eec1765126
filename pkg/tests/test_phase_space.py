import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsbilliard.geometry import TableConfig
from rsbilliard.phase_space import (
    HUGE_INDEX, PhasePoint, TangentVector, canonicalize, clean_distance, clean_phi_interval,
    cone_bounds, cone_bounds_batch, cosine_bound, cross_section_measure, homogeneity_index,
    homogeneity_index_batch, in_cross_section, involution, involution_batch, sample_mu,
)

HALF_PI = math.pi / 2


@pytest.fixture(scope="module")
def table():
    return TableConfig(0.36, 0.20, 0.01)


@pytest.fixture(scope="module")
def sample(table):
    return sample_mu(table, 200_000, seed=1)


def test_membership_examples(table):
    assert in_cross_section((1, 0.1, 0.3), table)
    mid = (1 - 2 * table.rbar) / 2
    assert in_cross_section((2, mid, 0.0), table)
    assert not in_cross_section((2, mid, HALF_PI), table)
    assert not in_cross_section((2, mid, -HALF_PI), table)
    assert not in_cross_section((0, 0.1, 0.0), table)


def test_clean_interval_agrees_with_distance(table):
    for r in np.linspace(0.01, 0.27, 9):
        lo, hi = clean_phi_interval(r, table.rbar)
        assert lo < 0 < hi
        inside = np.linspace(lo, hi, 50)[1:-1]
        assert np.all(clean_distance(np.full(48, 2), np.full(48, r), inside, table.rbar) > table.rbar)
        for edge in (lo - 1e-6, hi + 1e-6):
            assert np.all(clean_distance(2, r, edge, table.rbar) <= table.rbar)


def test_measure_matches_rejection_estimate(table):
    # independent Monte Carlo of the transparent mass
    rng = np.random.default_rng(0)
    n = 400_000
    length = 1 - 2 * table.rbar
    r = rng.random(n) * length
    phi = (rng.random(n) - 0.5) * math.pi
    ok = clean_distance(np.full(n, 2), r, phi, table.rbar) > table.rbar
    trans = length * math.pi * np.mean(ok * np.cos(phi))
    se = length * math.pi * np.std(ok * np.cos(phi)) / math.sqrt(n)
    expected = 4 * math.pi * table.rbar + 4 * trans
    assert cross_section_measure(table) == pytest.approx(expected, abs=4 * 4 * se)


def test_cosine_bound_is_infimum(table, sample):
    d = cosine_bound(table)
    assert d > 0
    t = sample.wall % 2 == 0
    assert np.cos(sample.phi[t]).min() >= d - 1e-9
    # d = 2 rbar for this table (hand computation of the extreme clean angle)
    assert d == pytest.approx(0.72, abs=1e-6)


def test_sample_mu_solid_cosine_mean(sample):
    s = sample.wall % 2 == 1
    c = np.cos(sample.phi[s])
    se = c.std() / math.sqrt(c.size)
    assert abs(c.mean() - math.pi / 4) < 3 * se
    ph = sample.phi[s]
    assert abs(ph.mean()) < 3 * ph.std() / math.sqrt(ph.size)


def test_sample_mu_solid_mass(table, sample):
    p = 4 * math.pi * table.rbar / cross_section_measure(table)
    frac = np.mean(sample.wall % 2 == 1)
    se = math.sqrt(p * (1 - p) / len(sample))
    assert abs(frac - p) < 3 * se


def test_sample_mu_is_reproducible(table):
    a = sample_mu(table, 1000, seed=3, stream=4)
    b = sample_mu(table, 1000, seed=3, stream=4)
    c = sample_mu(table, 1000, seed=3, stream=5)
    assert np.array_equal(a.r, b.r) and not np.array_equal(a.r, c.r)


def test_involution_examples(table):
    assert involution((1, 0.1, 0.0), table) == PhasePoint(1, 0.1, 0.0)
    assert involution((3, 0.1, 0.4), table) == PhasePoint(3, 0.1, -0.4)
    y = involution((2, 0.05, 0.2), table)
    assert y.wall == 6 and y.r == pytest.approx(0.28 - 0.05) and y.phi == 0.2


def test_involution_is_an_involution(table, sample):
    w, r, p = involution_batch(*involution_batch(sample.wall, sample.r, sample.phi, table), table)
    assert np.array_equal(w, sample.wall)
    assert np.max(np.abs(r - sample.r)) < 1e-10 and np.max(np.abs(p - sample.phi)) < 1e-10


def test_involution_preserves_membership(table, sample):
    from rsbilliard.phase_space import in_cross_section_batch
    w, r, p = involution_batch(sample.wall, sample.r, sample.phi, table)
    assert np.all(in_cross_section_batch(w, r, p, table))


def test_canonicalize_arc_endpoints(table):
    length = HALF_PI * table.rbar
    assert canonicalize((3, length, 0.2), table) == PhasePoint(1, 0.0, 0.2)
    assert canonicalize((1, 0.0, 0.2), table) == PhasePoint(1, 0.0, 0.2)
    assert canonicalize((7, 0.0, 0.1), table) == PhasePoint(1, length, 0.1)
    assert canonicalize((5, 0.1, 0.1), table) == PhasePoint(5, 0.1, 0.1)


@pytest.mark.parametrize("k0", [2, 5, 10])
def test_homogeneity_examples(k0):
    phi = HALF_PI - 1 / (k0 + 0.5) ** 2
    assert homogeneity_index(0.0, k0) == 0
    assert homogeneity_index(phi, k0) == k0
    assert homogeneity_index(-phi, k0) == -k0
    assert homogeneity_index(HALF_PI, k0) == HUGE_INDEX


@settings(max_examples=200, deadline=None)
@given(phi=st.floats(-HALF_PI + 1e-9, HALF_PI - 1e-9), k0=st.integers(2, 20))
def test_homogeneity_batch_matches_scalar(phi, k0):
    assert homogeneity_index_batch(np.array([phi]), k0)[0] == homogeneity_index(phi, k0)
    assert homogeneity_index(-phi, k0) == -homogeneity_index(phi, k0)


def test_cone_bounds_examples(table):
    k = table.constants
    a, b = cone_bounds((1, 0.1, 0.0), table)
    assert a == pytest.approx(1 / 0.36)
    assert b == pytest.approx(1 / 0.36 + 1 / k.tau_min_cert)
    a1, b1 = cone_bounds((2, 0.1, 0.0), table)
    a2, b2 = cone_bounds((2, 0.1, 0.5), table)
    assert a1 == a2 and b2 == pytest.approx(math.cos(0.5) / k.tau_min_cert)
    assert b2 >= k.d / k.tau_min_cert > a2


def test_cone_ordering_on_samples(table, sample):
    a, b = cone_bounds_batch(sample.wall, sample.phi, table)
    assert np.all(a < b)


def test_constants_bracket_sampled_flights(table):
    k = table.constants
    assert 0 < k.tau_min_cert <= k.tau_min_mc <= k.tau_max_mc <= k.tau_max_cert <= 5
    assert k.Lambda == pytest.approx(1 + k.tau_min_cert * k.a_min)
    assert k.d == pytest.approx(k.d_analytic, abs=1e-9)
    # Santalo mean free path on the section
    assert k.mean_tau == pytest.approx(2 * math.pi * table.area / k.measure)


def test_tangent_vector():
    v = TangentVector(0.0, -2.0)
    assert v.slope == -math.inf and v.norm == pytest.approx(2.0)
    with pytest.raises(ValueError):
        TangentVector(0.0, 0.0)
