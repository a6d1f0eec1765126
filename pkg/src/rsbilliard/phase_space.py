"""Cross section, invariant measure, involution, cones and homogeneity strips."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy import integrate, optimize

from . import _kernels as K
from .geometry import (
    SOLID_WALLS, TRANSPARENT_WALLS, OPPOSITE, WHITE, TableConfig, WallKind, wall_kind,
)
from .rng import make_rng

HALF_PI = 0.5 * math.pi
ALL_WALLS = np.arange(1, 9)


@dataclass(frozen=True)
class PhasePoint:
    """Element of the cross section, or of the white boundary when ``wall == 0``."""

    wall: int
    r: float
    phi: float

    def as_tuple(self):
        return (self.wall, self.r, self.phi)

    @property
    def kind(self) -> WallKind:
        return wall_kind(self.wall)


def as_point(x) -> PhasePoint:
    if isinstance(x, PhasePoint):
        return x
    w, r, phi = x
    return PhasePoint(int(w), float(r), float(phi))


@dataclass(frozen=True)
class TangentVector:
    dr: float
    dphi: float

    def __post_init__(self):
        if self.dr == 0 and self.dphi == 0:
            raise ValueError("tangent vector must be nonzero")

    @property
    def slope(self) -> float:
        if self.dr == 0:
            return math.copysign(math.inf, self.dphi)
        return self.dphi / self.dr

    @property
    def norm(self) -> float:
        return math.hypot(self.dr, self.dphi)


# ---------------------------------------------------------------- clean region

def clean_distance(wall, r, phi, rbar):
    """Segment distance to the nearest gray image for transparent points
    (``inf`` elsewhere); vectorised over arrays."""
    w = np.atleast_1d(np.asarray(wall, np.int64))
    rr = np.atleast_1d(np.asarray(r, float))
    ph = np.atleast_1d(np.asarray(phi, float))
    w, rr, ph = np.broadcast_arrays(w, rr, ph)
    out = K.clean_batch(np.ascontiguousarray(w), np.ascontiguousarray(rr),
                        np.ascontiguousarray(ph), float(rbar))
    return out if np.ndim(wall) or np.ndim(r) or np.ndim(phi) else float(out[0])


def clean_phi_interval(r: float, rbar: float) -> tuple:
    """Angles (lo, hi) such that a crossing at arclength ``r`` of a
    transparent wall is clean exactly for lo < phi < hi."""
    length = 1.0 - 2.0 * rbar
    if not 0.0 < r < length:
        return 0.0, 0.0

    def f(phi):
        return clean_distance(2, r, phi, rbar) - rbar

    ends = []
    for sign in (1.0, -1.0):
        grid = sign * np.linspace(0.0, HALF_PI, 257)
        vals = np.asarray(clean_distance(2, r, grid, rbar)) - rbar
        k = int(np.argmax(vals <= 0.0))
        ends.append(optimize.brentq(f, grid[k - 1], grid[k], xtol=1e-15, rtol=1e-15))
    return ends[1], ends[0]


def in_cross_section(x, table: TableConfig) -> bool:
    x = as_point(x)
    kind = wall_kind(x.wall)
    if kind is WallKind.WHITE:
        return False
    if not (0.0 <= x.r <= table.wall_length(x.wall)) or abs(x.phi) > HALF_PI:
        return False
    if kind is WallKind.SOLID:
        return True
    return bool(clean_distance(x.wall, x.r, x.phi, table.rbar) > table.rbar)


def in_cross_section_batch(wall, r, phi, table: TableConfig) -> np.ndarray:
    wall = np.asarray(wall, np.int64)
    r = np.asarray(r, float)
    phi = np.asarray(phi, float)
    length = np.where(wall % 2 == 1, HALF_PI * table.rbar, 1.0 - 2.0 * table.rbar)
    ok = (wall >= 1) & (wall <= 8) & (r >= 0) & (r <= length) & (np.abs(phi) <= HALF_PI)
    return ok & (clean_distance(wall, r, phi, table.rbar) > table.rbar)


# ---------------------------------------------------------------- measure

def cross_section_measure(table: TableConfig) -> float:
    """Total mass of cos(phi) dr dphi over the cross section."""
    solid = 4.0 * (HALF_PI * table.rbar) * 2.0

    def width(r):
        lo, hi = clean_phi_interval(r, table.rbar)
        return math.sin(hi) - math.sin(lo)

    length = 1.0 - 2.0 * table.rbar
    trans, _ = integrate.quad(width, 0.0, length, limit=200, epsabs=1e-12, epsrel=1e-11)
    return solid + 4.0 * trans


def cosine_bound(table: TableConfig, n_grid: int = 201) -> float:
    """Infimum of cos(phi) over the transparent part of the cross section."""
    length = 1.0 - 2.0 * table.rbar

    def worst(r):
        lo, hi = clean_phi_interval(r, table.rbar)
        return min(math.cos(lo), math.cos(hi))

    grid = np.linspace(0.0, length, n_grid)[1:-1]
    vals = np.array([worst(r) for r in grid])
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(worst, bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-12})
    return float(min(res.fun, vals[k]))


@dataclass(frozen=True)
class PhaseSample:
    wall: np.ndarray
    r: np.ndarray
    phi: np.ndarray

    def __len__(self):
        return len(self.wall)

    def point(self, i) -> PhasePoint:
        return PhasePoint(int(self.wall[i]), float(self.r[i]), float(self.phi[i]))


def sample_mu(table: TableConfig, count: int, seed: int, stream: int = 0) -> PhaseSample:
    """Exact draws from the normalised cos(phi) dr dphi measure on M."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = make_rng(seed, stream)
    lengths = np.array([table.wall_length(w) for w in ALL_WALLS])
    probs = lengths / lengths.sum()
    walls, rs, phis = [], [], []
    have = 0
    while have < count:
        n = max(2 * (count - have), 1024)
        w = rng.choice(ALL_WALLS, size=n, p=probs)
        r = rng.random(n) * lengths[w - 1]
        phi = (rng.random(n) - 0.5) * math.pi
        keep = rng.random(n) < np.cos(phi)
        w, r, phi = w[keep], r[keep], phi[keep]
        keep = in_cross_section_batch(w, r, phi, table)
        walls.append(w[keep])
        rs.append(r[keep])
        phis.append(phi[keep])
        have += int(keep.sum())
    return PhaseSample(np.concatenate(walls)[:count].astype(np.int64),
                       np.concatenate(rs)[:count], np.concatenate(phis)[:count])


# ---------------------------------------------------------------- involution

def involution_batch(wall, r, phi, table: TableConfig):
    wall = np.asarray(wall, np.int64)
    r = np.asarray(r, float)
    phi = np.asarray(phi, float)
    trans = (wall % 2 == 0) & (wall != WHITE)
    length = 1.0 - 2.0 * table.rbar
    new_wall = np.where(trans, np.where((wall == 2) | (wall == 4), wall + 4, wall - 4), wall)
    new_r = np.where(trans, length - r, r)
    new_phi = np.where(trans, phi, -phi)
    return new_wall, new_r, new_phi


def involution(x, table: TableConfig) -> PhasePoint:
    """Velocity reversal.  Solid and white points flip phi; transparent
    points move to the glued wall with reversed arclength."""
    x = as_point(x)
    if x.wall != WHITE and not in_cross_section(x, table):
        raise ValueError(f"{x} is not in the cross section")
    if x.wall in TRANSPARENT_WALLS:
        return PhasePoint(OPPOSITE[x.wall], (1.0 - 2.0 * table.rbar) - x.r, x.phi)
    return PhasePoint(x.wall, x.r, -x.phi)


def canonicalize(x, table: TableConfig, tol: float = 1e-12) -> PhasePoint:
    """Send a gray-arc endpoint to the lowest-index arc carrying the same point."""
    x = as_point(x)
    if x.wall not in SOLID_WALLS:
        return x
    length = HALF_PI * table.rbar
    if x.r <= tol:
        other = PhasePoint(x.wall % 8 + 2 if x.wall != 7 else 1, length, x.phi)
    elif x.r >= length - tol:
        other = PhasePoint(x.wall - 2 if x.wall != 1 else 7, 0.0, x.phi)
    else:
        return x
    return other if other.wall < x.wall else PhasePoint(x.wall, 0.0 if x.r <= tol else length, x.phi)


# ---------------------------------------------------------------- homogeneity

HUGE_INDEX = 2 ** 62


def homogeneity_index(phi: float, k0: int = 10) -> int:
    """Signed index of the homogeneity strip containing ``phi``."""
    if k0 < 2:
        raise ValueError("k0 must be >= 2")
    if not math.isfinite(phi) or abs(phi) > HALF_PI:
        raise ValueError(f"|phi| must be <= pi/2, got {phi!r}")
    delta = HALF_PI - abs(phi)
    if delta >= k0 ** -2:
        return 0
    if delta <= 0.0:
        return int(math.copysign(HUGE_INDEX, phi))
    k = max(math.ceil(delta ** -0.5) - 1, k0)
    return int(math.copysign(k, phi))


def homogeneity_index_batch(phi, k0: int = 10) -> np.ndarray:
    phi = np.asarray(phi, float)
    delta = HALF_PI - np.abs(phi)
    with np.errstate(divide="ignore"):
        k = np.ceil(np.where(delta > 0, delta, 1e-300) ** -0.5) - 1
    k = np.minimum(np.maximum(k, k0), HUGE_INDEX).astype(np.int64)
    k = np.where(delta >= k0 ** -2, 0, k)
    return np.where(phi < 0, -k, k)


# ---------------------------------------------------------------- constants

@dataclass(frozen=True)
class TableConstants:
    """Derived constants used by the cone field and the bracketing checks."""

    d: float
    d_analytic: float
    measure: float
    mean_tau: float
    tau_min_cert: float
    tau_max_cert: float
    tau_min_mc: float
    tau_max_mc: float
    max_free_flight: float
    kappa_min: float
    kappa_max: float
    a_min: float
    b_max: float
    Lambda: float
    C: float
    curve_bound: float

    def to_dict(self) -> dict:
        return asdict(self)


def certified_tau_min(table: TableConfig) -> float:
    """Lower bound on every flight leg between consecutive points of the
    extended section."""
    rb, r, e = table.rbar, table.r, table.eps
    return min(1.0 - 2.0 * rb, 1.0 / math.sqrt(2.0) - rb - r - e, 0.5 - r - e, 0.5)


def max_free_flight(table: TableConfig, n: int = 200_000, seed: int = 0) -> float:
    """Longest sampled straight flight between disks of the reduced table
    (white disk centred, radius r - eps), ignoring all side crossings."""
    rng = make_rng(seed, 7)
    rw = table.r - table.eps
    k = rng.integers(0, 5, n)
    th = rng.random(n) * 2 * math.pi
    cx = np.where(k < 4, K.ARC_CX[np.minimum(k, 3)], 0.5)
    cy = np.where(k < 4, K.ARC_CY[np.minimum(k, 3)], 0.5)
    rad = np.where(k < 4, table.rbar, rw)
    px = cx + rad * np.cos(th)
    py = cy + rad * np.sin(th)
    # outgoing direction inside the half plane of the outward normal
    psi = th + (rng.random(n) - 0.5) * math.pi
    vx, vy = np.cos(psi), np.sin(psi)
    ok = (px >= 0) & (px <= 1) & (py >= 0) & (py <= 1)
    flights = K.free_flight_batch(px[ok], py[ok], vx[ok], vy[ok], 0.0, 0.0, table.rbar, rw)
    return float(np.nanmax(flights))


def compute_constants(table: TableConfig, n_returns: int = 100_000, seed: int = 0,
                      n_free: int = 200_000) -> TableConstants:
    from .dynamics import step_many  # local import avoids a cycle

    measure = cross_section_measure(table)
    d = cosine_bound(table)
    tmin = certified_tau_min(table)
    ff = max_free_flight(table, n_free, seed)
    tmax = min(5.0, 1.1 * ff)
    sample = sample_mu(table, n_returns, seed, stream=11)
    rng = make_rng(seed, 12)
    rad = table.eps * np.sqrt(rng.random(n_returns))
    ang = rng.random(n_returns) * 2 * math.pi
    rec = step_many(sample.wall, sample.r, sample.phi, rad * np.cos(ang), rad * np.sin(ang),
                    table, raise_on_singular=False)
    good = rec.status == 0
    legs = rec.leg_tau[good]
    legs = legs[legs > 0]
    kmin = min(1.0 / table.rbar, 1.0 / table.r)
    kmax = max(1.0 / table.rbar, 1.0 / table.r)
    a_trans = d / (tmax + 1.0 / kmin)
    a_min = min(a_trans, kmin)
    b_max = kmax + 1.0 / tmin
    lam = 1.0 + tmin * a_min
    C = (tmin * a_min / math.sqrt(1.0 + b_max ** 2)) * math.sqrt(1.0 + a_min ** 2) / lam
    longest = max(HALF_PI * table.rbar, 1.0 - 2.0 * table.rbar)
    return TableConstants(
        d=d, d_analytic=2.0 * table.rbar, measure=measure,
        mean_tau=2.0 * math.pi * table.area / measure,
        tau_min_cert=tmin, tau_max_cert=tmax,
        tau_min_mc=float(legs.min()), tau_max_mc=float(rec.tau[good].max()),
        max_free_flight=ff, kappa_min=kmin, kappa_max=kmax,
        a_min=a_min, b_max=b_max, Lambda=lam, C=C,
        curve_bound=math.sqrt(1.0 + b_max ** 2) * longest,
    )


# ---------------------------------------------------------------- cones

def cone_bounds_batch(wall, phi, table: TableConfig, constants: TableConstants | None = None):
    """Unstable cone slopes [a, b] at each point; the stable cone is [-b, -a]."""
    k = constants or table.constants
    wall = np.asarray(wall, np.int64)
    cosphi = np.cos(np.asarray(phi, float))
    kappa = np.where(wall == WHITE, 1.0 / table.r, 1.0 / table.rbar)
    trans = (wall % 2 == 0) & (wall != WHITE)
    a = np.where(trans, k.d / (k.tau_max_cert + 1.0 / k.kappa_min), kappa)
    b = np.where(trans, cosphi / k.tau_min_cert, kappa + cosphi / k.tau_min_cert)
    return a, b


def cone_bounds(x, table: TableConfig) -> tuple:
    x = as_point(x)
    a, b = cone_bounds_batch(np.array([x.wall]), np.array([x.phi]), table)
    return float(a[0]), float(b[0])
