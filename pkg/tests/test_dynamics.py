import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsbilliard.dynamics import (
    NOT_SEPARATED, SingularityProximity, compose, inverse_step, n_steps, separation_time,
    separation_times, singularity_distance, step, step_extended, step_many, tangent_many,
    tangent_step,
)
from rsbilliard.geometry import TableConfig
from rsbilliard.phase_space import (
    PhasePoint, in_cross_section_batch, involution, sample_mu,
)

RBAR = 0.36


@pytest.fixture(scope="module")
def table():
    return TableConfig(RBAR, 0.20, 0.01)


# point on arc 1 at polar angle pi/4, normal direction: aims at the square centre
DIAGONAL = PhasePoint(1, RBAR * math.pi / 4, 0.0)


def test_radial_hit_reflects_straight_back(table):
    y = step_extended(DIAGONAL, (0.0, 0.0), table)
    assert y.wall == 0
    assert y.phi == pytest.approx(0.0, abs=1e-12)


def test_white_disk_blocks_the_diagonal(table):
    rec = step(DIAGONAL, (0.0, 0.0), table)
    assert rec.n_c == n_steps(DIAGONAL, (0.0, 0.0), table) == 2
    # out and back along the diagonal
    gap = math.sqrt(0.5) - RBAR - 0.20
    assert rec.tau == pytest.approx(2 * gap, abs=1e-12)
    assert rec.post.wall == 1 and rec.post.r == pytest.approx(DIAGONAL.r, abs=1e-12)
    assert np.allclose(rec.displacement, 0.0, atol=1e-12)


# from the bottom midpoint, phi = asin(0.4) makes the ray tangent to the
# centred white disk (distance 0.5 * 0.4 = R from its centre)
TANGENT_PHI = math.asin(0.4)
MID_BOTTOM = 0.5 - RBAR


def test_flight_missing_white_disk_has_one_leg(table):
    x = (2, MID_BOTTOM, TANGENT_PHI + 0.1)
    rec = step(x, (0.0, 0.0), table)
    # the ray next meets the gray disk at corner (1, 1)
    assert rec.n_c == 1 and rec.post.wall == 5
    assert singularity_distance(x, (0.0, 0.0), table) > 0


def test_tangent_aim_is_singular(table):
    x = (2, MID_BOTTOM, TANGENT_PHI)
    with pytest.raises(SingularityProximity):
        step(x, (0.0, 0.0), table)
    assert singularity_distance(x, (0.0, 0.0), table) == pytest.approx(0.0, abs=1e-12)
    assert step((2, MID_BOTTOM, TANGENT_PHI - 0.1), (0.0, 0.0), table).n_c == 2


def test_centering_outside_disk_is_rejected(table):
    with pytest.raises(ValueError):
        step(DIAGONAL, (0.02, 0.0), table)


def test_compose_zero_steps(table):
    tr = compose(DIAGONAL, np.zeros((0, 2)), 0, table)
    assert tr.records == [] and tr.start == DIAGONAL


def test_compose_matches_repeated_step(table):
    omega = np.array([[0.003, -0.002], [0.0, 0.0], [-0.005, 0.004]])
    x = PhasePoint(3, 0.1, 0.2)
    tr = compose(x, omega, 3, table)
    cur = x
    for i in range(3):
        cur = step(cur, omega[i], table).post
    assert tr.records[-1].post == cur


def test_inverse_step_inverts(table):
    s = sample_mu(table, 300, seed=4)
    rng = np.random.default_rng(1)
    for i in range(len(s)):
        x = s.point(i)
        c = rng.uniform(-0.007, 0.007, 2)
        try:
            y = step(x, c, table).post
            back = inverse_step(y, c, table)
        except SingularityProximity:
            continue
        assert back.wall == x.wall
        assert back.r == pytest.approx(x.r, abs=1e-10) and back.phi == pytest.approx(x.phi, abs=1e-10)


def test_batch_agrees_with_scalar(table):
    s = sample_mu(table, 200, seed=5)
    c = np.full((200, 2), [0.004, -0.003])
    b = step_many(s.wall, s.r, s.phi, c[:, 0], c[:, 1], table, raise_on_singular=False)
    for i in range(200):
        if b.singular[i]:
            continue
        rec = step(s.point(i), c[i], table)
        assert rec.post.wall == b.wall[i] and rec.n_c == b.n_c[i]
        assert rec.post.r == pytest.approx(b.r[i], abs=1e-13)
        assert rec.tau == pytest.approx(b.tau[i], abs=1e-13)


def test_returns_stay_on_section(table):
    s = sample_mu(table, 50_000, seed=6)
    rng = np.random.default_rng(2)
    ang = rng.uniform(0, 2 * math.pi, len(s))
    rad = 0.01 * np.sqrt(rng.random(len(s)))
    b = step_many(s.wall, s.r, s.phi, rad * np.cos(ang), rad * np.sin(ang), table,
                  raise_on_singular=False)
    ok = ~b.singular
    assert ok.mean() > 0.999
    assert np.all(in_cross_section_batch(b.wall[ok], b.r[ok], b.phi[ok], table))
    assert set(np.unique(b.n_c[ok])) <= {1, 2}
    k = table.constants
    assert np.all(b.tau[ok] <= k.tau_max_cert)
    assert np.all(b.leg_tau[ok][b.leg_tau[ok] > 0] >= k.tau_min_cert - 1e-12)


def test_tangent_matches_finite_difference(table):
    x = PhasePoint(3, 0.21, 0.3)
    c = (0.002, 0.001)
    h = 1e-7
    for v in ((1.0, 0.0), (0.0, 1.0), (0.6, -0.8)):
        img, factors = tangent_step(x, v, c, table)
        yp = step(PhasePoint(3, x.r + h * v[0], x.phi + h * v[1]), c, table).post
        ym = step(PhasePoint(3, x.r - h * v[0], x.phi - h * v[1]), c, table).post
        fd = ((yp.r - ym.r) / (2 * h), (yp.phi - ym.phi) / (2 * h))
        assert np.hypot(img.dr - fd[0], img.dphi - fd[1]) < 1e-5 * np.hypot(*fd)
        assert all(f > 0 for f in factors)


def test_tangent_many_matches_scalar(table):
    s = sample_mu(table, 50, seed=7)
    b = step_many(s.wall, s.r, s.phi, np.zeros(50), np.zeros(50), table, raise_on_singular=False)
    dr, dphi, fac = tangent_many(b, np.ones(50), np.full(50, 3.0))
    for i in np.flatnonzero(~b.singular)[:20]:
        v, f = tangent_step(s.point(i), (1.0, 3.0), (0.0, 0.0), table)
        assert v.dr == pytest.approx(dr[i], rel=1e-12) and v.dphi == pytest.approx(dphi[i], rel=1e-12)
        assert f[0] == pytest.approx(fac[i, 0], rel=1e-12)


def test_separation_examples(table):
    omega = np.zeros((5, 2))
    assert separation_time(DIAGONAL, DIAGONAL, omega, 5, 10, table) is NOT_SEPARATED
    assert separation_time(DIAGONAL, PhasePoint(3, 0.1, 0.0), omega, 5, 10, table) == 0


def test_separation_times_matches_scalar(table):
    s = sample_mu(table, 40, seed=8)
    y = type(s)(s.wall, s.r + 1e-6, s.phi + 3e-6)
    ok = in_cross_section_batch(y.wall, y.r, y.phi, table)
    rng = np.random.default_rng(4)
    centres = rng.uniform(-0.007, 0.007, (60, 40, 2))
    st_, sing = separation_times(s, y, centres, 10, table)
    for i in np.flatnonzero(ok & ~sing):
        want = separation_time(s.point(i), y.point(i), centres[:, i], 60, 10, table)
        assert (want is NOT_SEPARATED and st_[i] == -1) or want == st_[i]


@settings(max_examples=60, deadline=None)
@given(i=st.integers(0, 999), cx=st.floats(-0.007, 0.007), cy=st.floats(-0.007, 0.007))
def test_reversibility_property(table, i, cx, cy):
    x = sample_mu(table, 1000, seed=9).point(i)
    try:
        y = step(x, (cx, cy), table).post
        z = step(involution(y, table), (cx, cy), table).post
    except SingularityProximity:
        return
    back = involution(z, table)
    assert back.wall == x.wall
    assert abs(back.r - x.r) < 1e-9 and abs(back.phi - x.phi) < 1e-9
