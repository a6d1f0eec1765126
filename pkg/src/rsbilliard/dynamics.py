"""Extended map, return map, inverse, tangent cocycle and separation times."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .geometry import WHITE, TableConfig, check_centering
from .phase_space import (
    PhasePoint, PhaseSample, TangentVector, as_point, homogeneity_index,
    homogeneity_index_batch, in_cross_section, involution,
)

SING_TOL = 1e-9


class SingularityProximity(RuntimeError):
    """Raised when an orbit passes within the singularity tolerance."""

    def __init__(self, margin: float, index: int | None = None, status: int = 0):
        self.margin = float(margin)
        self.index = index
        self.status = int(status)
        where = "" if index is None else f" at index {index}"
        super().__init__(f"orbit within {self.margin:.3e} of a singularity{where}")


class DegenerateTangent(ArithmeticError):
    """The tangent image collapsed to zero or lost finiteness."""


class NotSeparated:
    """Sentinel for orbit pairs that did not separate within the horizon."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NotSeparated"


NOT_SEPARATED = NotSeparated()


@dataclass(frozen=True)
class Leg:
    """One straight flight between consecutive points of the extended section."""

    start: PhasePoint
    end: PhasePoint
    tau: float
    kappa0: float
    kappa1: float
    sign: float


@dataclass(frozen=True)
class ReturnRecord:
    pre: PhasePoint
    post: PhasePoint
    tau: float
    displacement: np.ndarray
    n_c: int
    sing_margin: float
    legs: tuple = field(default=(), repr=False)


@dataclass
class Trajectory:
    start: PhasePoint
    sequence: np.ndarray
    records: list

    def __len__(self):
        return len(self.records)

    @property
    def points(self) -> list:
        return [self.start] + [rec.post for rec in self.records]


def _curvature(wall, table):
    return K.wall_curvature(int(wall), table.rbar, table.r)


def _raw_star(x: PhasePoint, c, table):
    return K.step_star(int(x.wall), float(x.r), float(x.phi), float(c[0]), float(c[1]),
                       table.rbar, table.r)


def step_extended(x, c, table: TableConfig, tol: float = SING_TOL) -> PhasePoint:
    """Next point of the extended section (white boundary included)."""
    x = as_point(x)
    c = check_centering(c, table)
    w, r, phi, _, _, _, margin, status = _raw_star(x, c, table)
    if status != K.STATUS_OK or margin < tol:
        raise SingularityProximity(margin, status=status)
    return PhasePoint(int(w), float(r), float(phi))


def _trace_return(x: PhasePoint, c, table):
    legs = []
    tau = 0.0
    disp = np.zeros(2)
    margin = math.inf
    cur = x
    for j in range(3):
        w, r, phi, t, dx, dy, m, status = _raw_star(cur, c, table)
        if status != K.STATUS_OK:
            return None, 0.0, status
        if j == 2:
            return None, 0.0, K.STATUS_MULTI_WHITE
        nxt = PhasePoint(int(w), float(r), float(phi))
        sign = 1.0 if (w % 2 == 0 and w != WHITE) else -1.0
        legs.append(Leg(cur, nxt, t, _curvature(cur.wall, table), _curvature(w, table), sign))
        tau += t
        disp += (dx, dy)
        margin = min(margin, m)
        cur = nxt
        if w != WHITE:
            break
    rec = ReturnRecord(x, cur, tau, disp, len(legs), margin, tuple(legs))
    return rec, margin, K.STATUS_OK


def step(x, c, table: TableConfig, tol: float = SING_TOL) -> ReturnRecord:
    """One application of the return map with flight data."""
    x = as_point(x)
    c = check_centering(c, table)
    rec, margin, status = _trace_return(x, c, table)
    if status != K.STATUS_OK or margin < tol:
        raise SingularityProximity(margin, status=status)
    return rec


def n_steps(x, c, table: TableConfig, tol: float = SING_TOL) -> int:
    return step(x, c, table, tol).n_c


def singularity_distance(x, c, table: TableConfig) -> float:
    x = as_point(x)
    c = check_centering(c, table)
    rec, margin, status = _trace_return(x, c, table)
    if status != K.STATUS_OK:
        return 0.0
    return max(float(margin), 0.0)


def inverse_step(y, c, table: TableConfig, tol: float = SING_TOL) -> PhasePoint:
    """Unique preimage, obtained by reversing velocities around a forward step."""
    y = as_point(y)
    return involution(step(involution(y, table), c, table, tol).post, table)


def compose(x, omega, n: int, table: TableConfig, tol: float = SING_TOL) -> Trajectory:
    """Apply the return maps for centerings ``omega[0..n-1]`` in order."""
    x = as_point(x)
    omega = np.asarray(omega, float).reshape(-1, 2)
    if n < 0 or len(omega) < n:
        raise ValueError("need at least n centerings")
    records = []
    cur = x
    for i in range(n):
        try:
            rec = step(cur, omega[i], table, tol)
        except SingularityProximity as exc:
            raise SingularityProximity(exc.margin, index=i, status=exc.status) from None
        records.append(rec)
        cur = rec.post
    return Trajectory(x, omega[:n].copy(), records)


# ---------------------------------------------------------------- tangent map

def _leg_tangent(dr0, dphi0, cos0, kappa0, tau, cos1, kappa1, sign):
    """Transport (dr, dphi) across one flight leg and its landing.

    Returns the image components and the p-metric expansion factor.
    """
    u = (cos0 + tau * kappa0) * dr0 + tau * dphi0
    dr1 = sign * u / cos1
    dphi1 = kappa1 * dr1 + sign * (kappa0 * dr0 + dphi0)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.abs(u) / (cos0 * np.abs(dr0))
    return dr1, dphi1, factor


def tangent_step(x, v, c, table: TableConfig, tol: float = SING_TOL):
    """Image of a tangent vector under the return map.

    Returns ``(v_image, factors)`` where ``factors`` holds the p-metric
    expansion of each flight leg.
    """
    x = as_point(x)
    if not isinstance(v, TangentVector):
        v = TangentVector(*map(float, v))
    rec = step(x, c, table, tol)
    dr, dphi = v.dr, v.dphi
    factors = []
    for leg in rec.legs:
        dr, dphi, f = _leg_tangent(dr, dphi, math.cos(leg.start.phi), leg.kappa0, leg.tau,
                                   math.cos(leg.end.phi), leg.kappa1, leg.sign)
        factors.append(float(f))
        if not (math.isfinite(dr) and math.isfinite(dphi)) or (dr == 0 and dphi == 0):
            raise DegenerateTangent(f"tangent image degenerate at {x}")
    return TangentVector(float(dr), float(dphi)), factors


def tangent_many(batch: "ReturnBatch", dr, dphi):
    """Vectorised tangent transport over a ReturnBatch.

    Returns image components and an (N, 2) array of leg factors (nan where
    a second leg is absent).
    """
    dr = np.asarray(dr, float).copy()
    dphi = np.asarray(dphi, float).copy()
    phi0 = batch.pre_phi.copy()
    kappa0 = batch.pre_kappa.copy()
    factors = np.full((len(dr), 2), np.nan)
    for j in range(2):
        live = batch.n_c > j
        if not live.any():
            break
        d1, p1, f = _leg_tangent(dr[live], dphi[live], np.cos(phi0[live]), kappa0[live],
                                 batch.leg_tau[live, j], np.cos(batch.leg_phi[live, j]),
                                 batch.leg_kappa[live, j], batch.leg_sign[live, j])
        dr[live], dphi[live] = d1, p1
        factors[live, j] = f
        phi0[live] = batch.leg_phi[live, j]
        kappa0[live] = batch.leg_kappa[live, j]
    return dr, dphi, factors


# ---------------------------------------------------------------- batches

@dataclass
class ReturnBatch:
    pre_wall: np.ndarray
    pre_r: np.ndarray
    pre_phi: np.ndarray
    pre_kappa: np.ndarray
    wall: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    tau: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    n_c: np.ndarray
    margin: np.ndarray
    status: np.ndarray
    leg_tau: np.ndarray
    leg_phi: np.ndarray
    leg_kappa: np.ndarray
    leg_sign: np.ndarray
    leg_wall: np.ndarray
    leg_r: np.ndarray
    cx: np.ndarray
    cy: np.ndarray
    tol: float = SING_TOL

    @property
    def singular(self) -> np.ndarray:
        return (self.status != K.STATUS_OK) | (self.margin < self.tol)

    @property
    def post(self) -> PhaseSample:
        return PhaseSample(self.wall, self.r, self.phi)

    @property
    def white_phi(self) -> np.ndarray:
        """Angle at the intermediate white hit (nan when n_c == 1)."""
        return np.where(self.n_c == 2, self.leg_phi[:, 0], np.nan)

    def __len__(self):
        return len(self.wall)


def step_many(wall, r, phi, cx, cy, table: TableConfig, raise_on_singular: bool = True,
              tol: float = SING_TOL) -> ReturnBatch:
    """Return map applied to many points, each with its own centering."""
    wall = np.ascontiguousarray(wall, dtype=np.int64)
    r = np.ascontiguousarray(r, dtype=float)
    phi = np.ascontiguousarray(phi, dtype=float)
    n = wall.shape[0]
    cx = np.ascontiguousarray(np.broadcast_to(np.asarray(cx, float), (n,)))
    cy = np.ascontiguousarray(np.broadcast_to(np.asarray(cy, float), (n,)))
    out = K.step_batch(wall, r, phi, cx, cy, table.rbar, table.r)
    kappa0 = np.where(wall == WHITE, 1.0 / table.r,
                      np.where(wall % 2 == 1, 1.0 / table.rbar, 0.0))
    batch = ReturnBatch(wall, r, phi, kappa0, *out, cx=cx, cy=cy, tol=tol)
    if raise_on_singular:
        bad = np.flatnonzero(batch.singular)
        if bad.size:
            i = int(bad[0])
            raise SingularityProximity(batch.margin[i], index=i, status=batch.status[i])
    return batch


def records_from_batch(batch: ReturnBatch) -> list:
    recs = []
    for i in range(len(batch)):
        recs.append(ReturnRecord(
            PhasePoint(int(batch.pre_wall[i]), float(batch.pre_r[i]), float(batch.pre_phi[i])),
            PhasePoint(int(batch.wall[i]), float(batch.r[i]), float(batch.phi[i])),
            float(batch.tau[i]), np.array([batch.dx[i], batch.dy[i]]), int(batch.n_c[i]),
            float(batch.margin[i])))
    return recs


# ---------------------------------------------------------------- separation

def _strip_signature(x: PhasePoint, k0):
    return x.wall, homogeneity_index(x.phi, k0)


def separation_time(x, y, omega, max_n: int, k0: int, table: TableConfig,
                    tol: float = SING_TOL):
    """First time the two orbits sit in different walls or homogeneity
    strips, also comparing the intermediate white collisions."""
    x = as_point(x)
    y = as_point(y)
    omega = np.asarray(omega, float).reshape(-1, 2)
    if len(omega) < max_n:
        raise ValueError("omega shorter than max_n")
    if x == y:
        return NOT_SEPARATED
    for n in range(max_n + 1):
        if _strip_signature(x, k0) != _strip_signature(y, k0):
            return n
        if n == max_n:
            break
        rx = step(x, omega[n], table, tol)
        ry = step(y, omega[n], table, tol)
        if rx.n_c != ry.n_c:
            return n + 1
        if rx.n_c == 2 and (homogeneity_index(rx.legs[0].end.phi, k0)
                            != homogeneity_index(ry.legs[0].end.phi, k0)):
            return n + 1
        x, y = rx.post, ry.post
    return NOT_SEPARATED


def separation_times(x: PhaseSample, y: PhaseSample, centers, k0: int, table: TableConfig,
                     tol: float = SING_TOL):
    """Vectorised separation times.  ``centers`` has shape (max_n, N, 2).

    Returns ``(s, singular)``; ``s == -1`` marks pairs not separated.
    """
    centers = np.asarray(centers, float)
    max_n, n = centers.shape[0], len(x)
    xw, xr, xp = x.wall.copy(), x.r.copy(), x.phi.copy()
    yw, yr, yp = y.wall.copy(), y.r.copy(), y.phi.copy()
    s = np.full(n, -1, np.int64)
    singular = np.zeros(n, bool)
    same = (xw == yw) & (xr == yr) & (xp == yp)
    for t in range(max_n + 1):
        open_ = (s < 0) & ~singular & ~same
        differ = (xw != yw) | (homogeneity_index_batch(xp, k0) != homogeneity_index_batch(yp, k0))
        s[open_ & differ] = t
        open_ &= ~differ
        if t == max_n or not open_.any():
            break
        idx = np.flatnonzero(open_)
        c = centers[t, idx]
        bx = step_many(xw[idx], xr[idx], xp[idx], c[:, 0], c[:, 1], table, False, tol)
        by = step_many(yw[idx], yr[idx], yp[idx], c[:, 0], c[:, 1], table, False, tol)
        bad = bx.singular | by.singular
        singular[idx[bad]] = True
        inter = bx.n_c != by.n_c
        both = (bx.n_c == 2) & (by.n_c == 2)
        hx = homogeneity_index_batch(np.where(both, bx.leg_phi[:, 0], 0.0), k0)
        hy = homogeneity_index_batch(np.where(both, by.leg_phi[:, 0], 0.0), k0)
        inter |= both & (hx != hy)
        s[idx[inter & ~bad]] = t + 1
        xw[idx], xr[idx], xp[idx] = bx.wall, bx.r, bx.phi
        yw[idx], yr[idx], yp[idx] = by.wall, by.r, by.phi
    return s, singular
