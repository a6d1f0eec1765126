"""Table description, admissibility checks and exact plane geometry.

The torus is the unit square with opposite sides glued.  A gray disk of
radius ``rbar`` is centred on the square corners and a white disk of radius
``r`` is centred at ``(1/2, 1/2) + c`` with ``|c| <= eps``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels as K

SQRT2_INV = 1.0 / math.sqrt(2.0)
ON_WALL_TOL = 1e-9
LATTICE = np.array([(i, j) for i in range(-2, 3) for j in range(-2, 3)], dtype=float)

WHITE = 0
SOLID_WALLS = (1, 3, 5, 7)
TRANSPARENT_WALLS = (2, 4, 6, 8)
# transparent walls glued by the torus identification
OPPOSITE = {2: 6, 6: 2, 4: 8, 8: 4}


class WallKind(enum.Enum):
    SOLID = "solid"
    TRANSPARENT = "transparent"
    WHITE = "white"


def wall_kind(wall: int) -> WallKind:
    wall = int(wall)
    if wall == WHITE:
        return WallKind.WHITE
    if wall in SOLID_WALLS:
        return WallKind.SOLID
    if wall in TRANSPARENT_WALLS:
        return WallKind.TRANSPARENT
    raise ValueError(f"unknown wall id {wall}")


def _check_positive_finite(**kwargs):
    for name, value in kwargs.items():
        if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value)):
            raise ValueError(f"{name} must be a finite real number, got {value!r}")
        if value <= 0:
            raise ValueError(f"{name} must be positive, got {value!r}")


def free_zone_bound(rbar: float) -> float:
    """Largest white radius plus offset keeping the white disk clear of
    every chord joining a gray arc to the far end of an adjacent side."""
    if not math.isfinite(rbar) or rbar <= 0:
        raise ValueError(f"rbar must be positive and finite, got {rbar!r}")
    if rbar >= 0.5:
        raise ValueError("free_zone_bound needs rbar < 1/2")
    w = 1.0 - 2.0 * rbar
    return (math.sqrt(w) - rbar * w) / (2.0 * (1.0 - rbar))


@dataclass(frozen=True)
class Condition:
    name: str
    lhs: float
    rhs: float
    relation: str
    passed: bool
    slack: float

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "relation": self.relation, "pass": self.passed, "slack": self.slack}


@dataclass(frozen=True)
class ValidationReport:
    rbar: float
    r: float
    eps: float
    L: float
    conditions: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def failed(self) -> list:
        return [c.name for c in self.conditions if not c.passed]

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"rbar": self.rbar, "r": self.r, "eps": self.eps, "L": self.L,
                "pass": self.passed, "conditions": [c.to_dict() for c in self.conditions]}


def _condition(name, lhs, rhs, relation):
    if relation == "<":
        slack = rhs - lhs
        ok = slack > 0
    elif relation == ">=":
        slack = lhs - rhs
        ok = slack >= 0
    else:  # pragma: no cover
        raise ValueError(relation)
    if not math.isfinite(slack):
        ok = False
    return Condition(name, float(lhs), float(rhs), relation, bool(ok), float(slack))


def validate_table(rbar: float, r: float, eps: float) -> ValidationReport:
    """Check the five admissibility inequalities and report their slack."""
    _check_positive_finite(rbar=rbar, r=r, eps=eps)
    L = free_zone_bound(rbar) if rbar < 0.5 else float("nan")
    conds = (
        _condition("no_overlap_max", max(rbar, r + eps), 0.5, "<"),
        _condition("no_overlap_sum", rbar + r + eps, SQRT2_INV, "<"),
        _condition("finite_horizon_rbar", rbar, 0.5 * SQRT2_INV, ">="),
        _condition("finite_horizon_sum", rbar + r - eps, 0.5, ">="),
        _condition("free_zone", r + eps, L, "<"),
    )
    return ValidationReport(float(rbar), float(r), float(eps), L, conds)


@dataclass(frozen=True)
class TableConfig:
    """Immutable table triple.  Construction validates admissibility unless
    ``check=False``; derived constants are computed lazily and cached."""

    rbar: float
    r: float
    eps: float
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.check:
            rep = validate_table(self.rbar, self.r, self.eps)
            if not rep.passed:
                raise ValueError(f"inadmissible table, failed: {', '.join(rep.failed)}")

    @cached_property
    def report(self) -> ValidationReport:
        return validate_table(self.rbar, self.r, self.eps)

    @property
    def L(self) -> float:
        return free_zone_bound(self.rbar)

    @property
    def kappa_gray(self) -> float:
        return 1.0 / self.rbar

    @property
    def kappa_white(self) -> float:
        return 1.0 / self.r

    @property
    def area(self) -> float:
        """Area of the billiard domain (torus minus both disks)."""
        return 1.0 - math.pi * (self.rbar ** 2 + self.r ** 2)

    def wall_length(self, wall: int) -> float:
        wall_kind(wall)
        return K.wall_length(int(wall), self.rbar, self.r)

    @cached_property
    def constants(self):
        from .phase_space import compute_constants
        return compute_constants(self)

    def as_dict(self) -> dict:
        return {"rbar": self.rbar, "r": self.r, "eps": self.eps}


def check_centering(c, table: TableConfig, tol: float = 1e-12) -> np.ndarray:
    c = np.asarray(c, dtype=float).reshape(2)
    if not np.all(np.isfinite(c)):
        raise ValueError("centering must be finite")
    if math.hypot(c[0], c[1]) > table.eps + tol:
        raise ValueError(f"centering {c.tolist()} exceeds eps={table.eps}")
    return c


def segment_disk_distance(mid, direction, half_length, center, radius) -> float:
    """Signed distance from a segment to a disk (negative means overlap)."""
    mid = np.asarray(mid, float)
    u = np.asarray(direction, float)
    o = np.asarray(center, float) - mid
    t = float(np.clip(o @ u, -half_length, half_length))
    return float(np.hypot(*(o - t * u))) - radius


def _on_square_side(p, tol=ON_WALL_TOL):
    x, y = p
    inside = -tol <= x <= 1 + tol and -tol <= y <= 1 + tol
    return inside and (min(abs(x), abs(x - 1)) <= tol or min(abs(y), abs(y - 1)) <= tol)


def clean_pass(point, direction, table: TableConfig) -> bool:
    """True when the unit segment along ``direction`` centred at ``point``
    stays at positive distance from every periodic image of the gray disk."""
    p = np.asarray(point, float).reshape(2)
    u = np.asarray(direction, float).reshape(2)
    if not _on_square_side(p):
        raise ValueError(f"point {p.tolist()} is not on a side of the square")
    nu = math.hypot(*u)
    if not math.isfinite(nu) or abs(nu - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    u = u / nu
    return all(segment_disk_distance(p, u, 0.5, c, table.rbar) > 0 for c in LATTICE)


def wall_chart(wall: int, r: float, table: TableConfig, c=(0.0, 0.0)):
    """Plane point, inward unit normal and curvature at arclength ``r``."""
    kind = wall_kind(wall)
    length = table.wall_length(wall)
    if not (-ON_WALL_TOL <= r <= length + ON_WALL_TOL):
        raise ValueError(f"r={r} outside [0, {length}] on wall {wall}")
    px, py, nx, ny = K.wall_frame(int(wall), float(r), float(c[0]), float(c[1]), table.rbar, table.r)
    kappa = {WallKind.SOLID: 1.0 / table.rbar, WallKind.TRANSPARENT: 0.0,
             WallKind.WHITE: 1.0 / table.r}[kind]
    return np.array([px, py]), np.array([nx, ny]), kappa


def wall_locate(point, table: TableConfig, c=(0.0, 0.0), tol: float = ON_WALL_TOL):
    """Inverse chart: the (wall, r) whose base point is ``point``."""
    x, y = np.asarray(point, float).reshape(2)
    best = None
    for k, wall in enumerate(SOLID_WALLS):
        cx, cy = K.ARC_CX[k], K.ARC_CY[k]
        th = math.atan2(y - cy, x - cx)
        a = (K.ARC_TEND[k] - th) % (2 * math.pi)
        if a > 1.5 * math.pi:
            a -= 2 * math.pi
        err = abs(math.hypot(x - cx, y - cy) - table.rbar)
        rr = table.rbar * a
        if -tol <= rr <= table.wall_length(wall) + tol and (best is None or err < best[0]):
            best = (err, wall, min(max(rr, 0.0), table.wall_length(wall)))
    rb = table.rbar
    sides = ((2, abs(y), x - rb), (4, abs(x - 1), y - rb),
             (6, abs(y - 1), 1 - rb - x), (8, abs(x), 1 - rb - y))
    for wall, err, rr in sides:
        if -tol <= rr <= 1 - 2 * rb + tol and (best is None or err < best[0]):
            best = (err, wall, rr)
    wx, wy = x - 0.5 - c[0], y - 0.5 - c[1]
    err = abs(math.hypot(wx, wy) - table.r)
    if best is None or err < best[0]:
        best = (err, WHITE, table.r * ((-math.atan2(wy, wx)) % (2 * math.pi)))
    if best[0] > tol:
        raise ValueError(f"point {[x, y]} is not on any wall")
    return best[1], best[2]


def min_disk_gap(table: TableConfig, n_angles: int = 3600) -> float:
    """Smallest gray-white distance over centerings on the circle |c| = eps."""
    th = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    cx = 0.5 + table.eps * np.cos(th)
    cy = 0.5 + table.eps * np.sin(th)
    d = np.full(th.shape, np.inf)
    for gx, gy in ((0, 0), (1, 0), (0, 1), (1, 1)):
        d = np.minimum(d, np.hypot(cx - gx, cy - gy))
    return float(d.min() - table.rbar - table.r)
