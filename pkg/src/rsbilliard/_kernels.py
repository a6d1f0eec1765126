"""Compiled event-driven kernels for the two-disk torus billiard.

Coordinates live in the fundamental cell [0, 1]^2.  The gray disk sits on
the four cell corners, the white disk at (1/2, 1/2) + c.  Wall ids:

    0       white disk boundary (extended section only)
    1,3,5,7 gray quarter arcs at corners (0,0), (1,0), (1,1), (0,1)
    2,4,6,8 transparent sides bottom, right, top, left

A phase point (wall, r, phi) is a unit velocity based on a wall; ``phi`` is
the clockwise angle from the inward normal and ``r`` increases to the right
when facing along the normal.  All scalar helpers return plain tuples so they
inline cleanly inside the batch loops.
"""

import math

import numpy as np
from numba import njit, prange

HALF_PI = 0.5 * math.pi
TWO_PI = 2.0 * math.pi

# corner of the gray arc on wall 2k+1 and the arc angle at which r = 0
ARC_CX = np.array([0.0, 1.0, 1.0, 0.0])
ARC_CY = np.array([0.0, 0.0, 1.0, 1.0])
ARC_TEND = np.array([0.5 * math.pi, math.pi, 1.5 * math.pi, 2.0 * math.pi])

EPS_T = 1e-12
TIE_T = 1e-12
MAX_CROSSINGS = 32

STATUS_OK = 0
STATUS_TIE = 1
STATUS_RUNAWAY = 2
STATUS_MULTI_WHITE = 3


@njit(cache=True)
def wall_length(wall, rbar, rw):
    if wall == 0:
        return TWO_PI * rw
    if wall % 2 == 1:
        return HALF_PI * rbar
    return 1.0 - 2.0 * rbar


@njit(cache=True)
def wall_frame(wall, r, cx, cy, rbar, rw):
    """Base point and inward unit normal of arclength ``r`` on ``wall``."""
    if wall == 0:
        th = -r / rw
        nx = math.cos(th)
        ny = math.sin(th)
        return 0.5 + cx + rw * nx, 0.5 + cy + rw * ny, nx, ny
    if wall % 2 == 1:
        k = (wall - 1) // 2
        th = ARC_TEND[k] - r / rbar
        nx = math.cos(th)
        ny = math.sin(th)
        return ARC_CX[k] + rbar * nx, ARC_CY[k] + rbar * ny, nx, ny
    if wall == 2:
        return rbar + r, 0.0, 0.0, 1.0
    if wall == 4:
        return 1.0, rbar + r, -1.0, 0.0
    if wall == 6:
        return 1.0 - rbar - r, 1.0, 0.0, -1.0
    return 0.0, 1.0 - rbar - r, 1.0, 0.0


@njit(cache=True)
def chart_to_plane(wall, r, phi, cx, cy, rbar, rw):
    px, py, nx, ny = wall_frame(wall, r, cx, cy, rbar, rw)
    c = math.cos(phi)
    s = math.sin(phi)
    # e_r = normal turned clockwise by a right angle
    vx = c * nx + s * ny
    vy = c * ny - s * nx
    return px, py, vx, vy


@njit(cache=True)
def _angle_in_frame(vx, vy, nx, ny):
    return math.atan2(vx * ny - vy * nx, vx * nx + vy * ny)


@njit(cache=True)
def side_clean_distance(side_wall, qx, qy, vx, vy, rbar):
    """Distance from the unit segment centred at q to the gray images at the
    two ends of the crossed side (the only images within reach)."""
    if side_wall == 2 or side_wall == 6:
        y0 = 0.0 if qy < 0.5 else 1.0
        ax, ay, bx, by = 0.0, y0, 1.0, y0
    else:
        x0 = 0.0 if qx < 0.5 else 1.0
        ax, ay, bx, by = x0, 0.0, x0, 1.0
    best = 1e300
    for j in range(2):
        ox = (ax if j == 0 else bx) - qx
        oy = (ay if j == 0 else by) - qy
        t = ox * vx + oy * vy
        if t > 0.5:
            t = 0.5
        elif t < -0.5:
            t = -0.5
        dx = ox - t * vx
        dy = oy - t * vy
        d = math.sqrt(dx * dx + dy * dy)
        if d < best:
            best = d
    return best


@njit(cache=True)
def trace_leg(px, py, vx, vy, cx, cy, rbar, rw, stop_at_clean):
    """Follow a straight flight until the next element of the extended section.

    Returns (wall, qx, qy, length, dispx, dispy, margin, status).  For a
    transparent return the end point is already wrapped onto the side the
    particle enters through.
    """
    total = 0.0
    dispx = 0.0
    dispy = 0.0
    margin = 1e300
    wx = 0.5 + cx
    wy = 0.5 + cy
    tclose = np.empty(5)
    gap = np.empty(5)
    for _ in range(MAX_CROSSINGS):
        t_hit = 1e300
        hit = -1
        for k in range(5):
            if k < 4:
                ox = px - ARC_CX[k]
                oy = py - ARC_CY[k]
                rad = rbar
            else:
                ox = px - wx
                oy = py - wy
                rad = rw
            b = ox * vx + oy * vy
            d2 = ox * ox + oy * oy
            cc = d2 - rad * rad
            disc = b * b - cc
            tclose[k] = -b
            perp2 = d2 - b * b
            gap[k] = math.sqrt(perp2 if perp2 > 0.0 else 0.0) - rad
            if b < 0.0 and disc > 0.0:
                t = -b - math.sqrt(disc)
                if t > EPS_T and t < t_hit:
                    t_hit = t
                    hit = k
        t_side = 1e300
        side = -1
        if vx > 0.0:
            t = (1.0 - px) / vx
            if t < t_side:
                t_side = t
                side = 8  # leaves through x=1, enters on the left side
        elif vx < 0.0:
            t = -px / vx
            if t < t_side:
                t_side = t
                side = 4
        if vy > 0.0:
            t = (1.0 - py) / vy
            if t < t_side:
                t_side = t
                side = 2
        elif vy < 0.0:
            t = -py / vy
            if t < t_side:
                t_side = t
                side = 6
        t_end = t_hit if t_hit < t_side else t_side
        for k in range(5):
            # grazing passes can round to a gap of -0.0
            if k != hit and tclose[k] > 0.0 and tclose[k] < t_end:
                if abs(gap[k]) < margin:
                    margin = abs(gap[k])
        if abs(t_hit - t_side) < TIE_T:
            return -1, px, py, total, dispx, dispy, 0.0, STATUS_TIE
        if t_hit < t_side:
            qx = px + t_hit * vx
            qy = py + t_hit * vy
            total += t_hit
            dispx += t_hit * vx
            dispy += t_hit * vy
            wall = 0 if hit == 4 else 2 * hit + 1
            return wall, qx, qy, total, dispx, dispy, margin, STATUS_OK
        qx = px + t_side * vx
        qy = py + t_side * vy
        total += t_side
        dispx += t_side * vx
        dispy += t_side * vy
        if side == 8 or side == 4:
            qx = 1.0 if side == 4 else 0.0
            along = qy
            crossed_x = 1.0 - qx
            dmin = side_clean_distance(side, crossed_x, qy, vx, vy, rbar)
        else:
            qy = 1.0 if side == 6 else 0.0
            along = qx
            crossed_y = 1.0 - qy
            dmin = side_clean_distance(side, qx, crossed_y, vx, vy, rbar)
        m = abs(dmin - rbar)
        if m < margin:
            margin = m
        m = min(abs(along - rbar), abs(along - (1.0 - rbar)))
        if m < margin:
            margin = m
        if stop_at_clean and dmin > rbar:
            return side, qx, qy, total, dispx, dispy, margin, STATUS_OK
        px = qx
        py = qy
    return -1, px, py, total, dispx, dispy, 0.0, STATUS_RUNAWAY


@njit(cache=True)
def step_star(wall, r, phi, cx, cy, rbar, rw):
    """One application of the extended map.

    Returns (wall', r', phi', length, dispx, dispy, margin, status).
    """
    px, py, vx, vy = chart_to_plane(wall, r, phi, cx, cy, rbar, rw)
    w1, qx, qy, tau, dx, dy, margin, status = trace_leg(
        px, py, vx, vy, cx, cy, rbar, rw, True)
    if status != STATUS_OK:
        return -1, 0.0, 0.0, tau, dx, dy, 0.0, status
    if w1 % 2 == 0 and w1 != 0:
        nx = 0.0
        ny = 0.0
        if w1 == 2:
            ny = 1.0
            r1 = qx - rbar
        elif w1 == 4:
            nx = -1.0
            r1 = qy - rbar
        elif w1 == 6:
            ny = -1.0
            r1 = 1.0 - rbar - qx
        else:
            nx = 1.0
            r1 = 1.0 - rbar - qy
        phi1 = _angle_in_frame(vx, vy, nx, ny)
        return w1, r1, phi1, tau, dx, dy, margin, STATUS_OK
    if w1 == 0:
        ox = qx - (0.5 + cx)
        oy = qy - (0.5 + cy)
        rad = rw
    else:
        k = (w1 - 1) // 2
        ox = qx - ARC_CX[k]
        oy = qy - ARC_CY[k]
        rad = rbar
    nn = math.sqrt(ox * ox + oy * oy)
    nx = ox / nn
    ny = oy / nn
    vn = vx * nx + vy * ny
    ux = vx - 2.0 * vn * nx
    uy = vy - 2.0 * vn * ny
    phi1 = _angle_in_frame(ux, uy, nx, ny)
    th = math.atan2(ny, nx)
    if w1 == 0:
        a = (-th) % TWO_PI
        r1 = rw * a
    else:
        a = (ARC_TEND[k] - th) % TWO_PI
        if a > 1.5 * math.pi:
            a -= TWO_PI
        length = HALF_PI * rad
        r1 = rad * a
        if r1 < 0.0:
            r1 = 0.0
        elif r1 > length:
            r1 = length
        m = min(r1, length - r1)
        if m < margin:
            margin = m
    m = HALF_PI - abs(phi1)
    if m < margin:
        margin = m
    return w1, r1, phi1, tau, dx, dy, margin, STATUS_OK


@njit(cache=True)
def wall_curvature(wall, rbar, rw):
    if wall == 0:
        return 1.0 / rw
    if wall % 2 == 1:
        return 1.0 / rbar
    return 0.0


@njit(cache=True, parallel=True)
def step_star_batch(wall, r, phi, cx, cy, rbar, rw):
    n = wall.shape[0]
    ow = np.empty(n, np.int64)
    orr = np.empty(n)
    ophi = np.empty(n)
    otau = np.empty(n)
    odx = np.empty(n)
    ody = np.empty(n)
    omargin = np.empty(n)
    ostatus = np.empty(n, np.int64)
    for i in prange(n):
        res = step_star(wall[i], r[i], phi[i], cx[i], cy[i], rbar, rw)
        ow[i] = res[0]
        orr[i] = res[1]
        ophi[i] = res[2]
        otau[i] = res[3]
        odx[i] = res[4]
        ody[i] = res[5]
        omargin[i] = res[6]
        ostatus[i] = res[7]
    return ow, orr, ophi, otau, odx, ody, omargin, ostatus


@njit(cache=True, parallel=True)
def step_batch(wall, r, phi, cx, cy, rbar, rw):
    """Return map on a batch of points, one centering per point.

    Returns a tuple of arrays: wall, r, phi, tau, dx, dy, n_c, margin, status,
    and per-leg data (legs, 2 columns): length, end angle, end curvature,
    end orientation sign, end wall, end arclength.
    """
    n = wall.shape[0]
    ow = np.empty(n, np.int64)
    orr = np.empty(n)
    ophi = np.empty(n)
    otau = np.empty(n)
    odx = np.empty(n)
    ody = np.empty(n)
    onc = np.empty(n, np.int64)
    omargin = np.empty(n)
    ostatus = np.empty(n, np.int64)
    leg_tau = np.zeros((n, 2))
    leg_phi = np.zeros((n, 2))
    leg_kappa = np.zeros((n, 2))
    leg_sign = np.zeros((n, 2))
    leg_wall = np.full((n, 2), -1, np.int64)
    leg_r = np.zeros((n, 2))
    for i in prange(n):
        w = wall[i]
        rr = r[i]
        ph = phi[i]
        tau = 0.0
        dx = 0.0
        dy = 0.0
        margin = 1e300
        status = STATUS_OK
        nc = 0
        for j in range(3):
            res = step_star(w, rr, ph, cx[i], cy[i], rbar, rw)
            if res[7] != STATUS_OK:
                status = res[7]
                margin = 0.0
                break
            if j == 2:
                status = STATUS_MULTI_WHITE
                margin = 0.0
                break
            w = res[0]
            rr = res[1]
            ph = res[2]
            tau += res[3]
            dx += res[4]
            dy += res[5]
            if res[6] < margin:
                margin = res[6]
            leg_tau[i, j] = res[3]
            leg_phi[i, j] = ph
            leg_kappa[i, j] = wall_curvature(w, rbar, rw)
            leg_sign[i, j] = 1.0 if (w % 2 == 0 and w != 0) else -1.0
            leg_wall[i, j] = w
            leg_r[i, j] = rr
            nc = j + 1
            if w != 0:
                break
        ow[i] = w
        orr[i] = rr
        ophi[i] = ph
        otau[i] = tau
        odx[i] = dx
        ody[i] = dy
        onc[i] = nc
        omargin[i] = margin
        ostatus[i] = status
    return (ow, orr, ophi, otau, odx, ody, onc, omargin, ostatus,
            leg_tau, leg_phi, leg_kappa, leg_sign, leg_wall, leg_r)


@njit(cache=True, parallel=True)
def free_flight_batch(px, py, vx, vy, cx, cy, rbar, rw):
    """Length of the straight flight to the first disk, ignoring clean passes."""
    n = px.shape[0]
    out = np.empty(n)
    for i in prange(n):
        res = trace_leg(px[i], py[i], vx[i], vy[i], cx, cy, rbar, rw, False)
        out[i] = res[3] if res[7] == STATUS_OK else np.nan
    return out


@njit(cache=True, parallel=True)
def clean_batch(wall, r, phi, rbar):
    """Clean-pass distance for points on transparent walls (``inf`` elsewhere).

    A transparent point is in the cross section iff the returned distance
    exceeds ``rbar``.
    """
    n = wall.shape[0]
    out = np.empty(n)
    for i in prange(n):
        w = wall[i]
        if w % 2 == 1 or w == 0:
            out[i] = np.inf
            continue
        px, py, vx, vy = chart_to_plane(w, r[i], phi[i], 0.0, 0.0, rbar, 0.1)
        out[i] = side_clean_distance(w, px, py, vx, vy, rbar)
    return out
