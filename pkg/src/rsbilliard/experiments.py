"""Property checks on the dynamics: invariance, reversibility, hyperbolicity,
tangent-map accuracy and separation times.  Each returns a plain dict
suitable for JSON output."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .dynamics import (
    SING_TOL, separation_times, step_many, tangent_many,
)
from .geometry import TableConfig
from .phase_space import (
    PhaseSample, cone_bounds_batch, in_cross_section_batch, involution_batch, sample_mu,
)
from .rng import make_rng


def disk_centerings(table: TableConfig, n: int, seed: int, stream: int = 0) -> np.ndarray:
    rng = make_rng(seed, stream, 99)
    rad = table.eps * np.sqrt(rng.random(n))
    ang = 2 * math.pi * rng.random(n)
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


def default_invariance_centerings(table: TableConfig):
    e = table.eps
    return [(0.0, 0.0), (e, 0.0), (e * math.cos(2.0), e * math.sin(2.0))]


# ---------------------------------------------------------------- invariance

def invariance_test(table: TableConfig, centerings=None, n: int = 1_000_000, seed: int = 0,
                    alpha: float = 1e-3, inverse: bool = False) -> dict:
    """Two-sample KS tests of pushed-forward against fresh mu-samples, per
    wall and per marginal (r, phi), Bonferroni corrected."""
    centerings = centerings or default_invariance_centerings(table)
    rows = []
    discarded = 0
    for ci, c in enumerate(centerings):
        src = sample_mu(table, n, seed, stream=(100, ci))
        fresh = sample_mu(table, n, seed, stream=(101, ci))
        w, r, phi = src.wall, src.r, src.phi
        if inverse:
            w, r, phi = involution_batch(w, r, phi, table)
        b = step_many(w, r, phi, c[0], c[1], table, raise_on_singular=False)
        ok = ~b.singular
        discarded += int((~ok).sum())
        pw, pr, pp = b.wall[ok], b.r[ok], b.phi[ok]
        if inverse:
            pw, pr, pp = involution_batch(pw, pr, pp, table)
        for wall in range(1, 9):
            a = pw == wall
            f = fresh.wall == wall
            for name, x, y in (("r", pr[a], fresh.r[f]), ("phi", pp[a], fresh.phi[f])):
                res = stats.ks_2samp(x, y)
                rows.append({"centering": list(map(float, c)), "wall": wall, "marginal": name,
                             "statistic": float(res.statistic), "pvalue": float(res.pvalue)})
        # wall frequencies
        counts = np.array([[np.sum(pw == k) for k in range(1, 9)],
                           [np.sum(fresh.wall == k) for k in range(1, 9)]])
        chi = stats.chi2_contingency(counts)
        rows.append({"centering": list(map(float, c)), "wall": 0, "marginal": "wall",
                     "statistic": float(chi.statistic), "pvalue": float(chi.pvalue)})
    m = len(rows)
    pmin = min(r["pvalue"] for r in rows)
    return {"tests": rows, "n_tests": m, "min_pvalue": pmin,
            "min_adjusted_pvalue": min(1.0, pmin * m), "alpha": alpha,
            "discarded": discarded, "pass": bool(pmin * m > alpha)}


# ---------------------------------------------------------------- reversibility

def reversibility_test(table: TableConfig, n: int = 10_000, seed: int = 0, rounds: int = 2,
                       tol: float = 1e-8) -> dict:
    """Apply I o F_c o I o F_c ``rounds`` times and measure the return error."""
    s = sample_mu(table, n, seed, stream=(110,))
    c = disk_centerings(table, n, seed, 110)
    w, r, phi = s.wall, s.r, s.phi
    bad = np.zeros(n, bool)
    for _ in range(2 * rounds):
        b = step_many(w, r, phi, c[:, 0], c[:, 1], table, raise_on_singular=False)
        bad |= b.singular
        w, r, phi = involution_batch(b.wall, b.r, b.phi, table)
    ok = ~bad
    wall_mismatch = int(np.sum(w[ok] != s.wall[ok]))
    err = np.maximum(np.abs(r - s.r), np.abs(phi - s.phi))[ok & (w == s.wall)]
    max_err = float(err.max()) if err.size else 0.0
    return {"n": int(ok.sum()), "discarded": int(bad.sum()), "wall_mismatch": wall_mismatch,
            "max_error": max_err, "tol": tol, "pass": bool(wall_mismatch == 0 and max_err < tol)}


# ---------------------------------------------------------------- hyperbolicity

def _slope(dr, dphi):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(dr != 0, dphi / dr, np.copysign(np.inf, dphi))


def cone_invariance_test(table: TableConfig, n_samples: int = 100_000, n_centerings: int = 100,
                         seed: int = 0, band: float = 1e-6) -> dict:
    """Map both unstable-cone boundary vectors and count images outside the
    open image cone; also record the smallest per-leg p-expansion."""
    k = table.constants
    cs = disk_centerings(table, n_centerings, seed, 120)
    cs[0] = 0.0
    violations = 0
    checked = 0
    skipped = 0
    min_factor = math.inf
    order_violations = 0
    for i, c in enumerate(cs):
        s = sample_mu(table, n_samples, seed, stream=(121, i))
        b = step_many(s.wall, s.r, s.phi, c[0], c[1], table, raise_on_singular=False)
        ok = ~b.singular & (b.margin >= band)
        skipped += int((~ok).sum())
        a0, b0 = cone_bounds_batch(s.wall, s.phi, table, k)
        order_violations += int(np.sum(a0 >= b0))
        a1, b1 = cone_bounds_batch(b.wall, b.phi, table, k)
        for slope in (a0, b0):
            dr, dphi, fac = tangent_many(b, np.ones(n_samples), slope)
            v = _slope(dr, dphi)
            inside = (v > a1) & (v < b1)
            violations += int(np.sum(ok & ~inside))
            f = np.where(np.isnan(fac), np.inf, fac)[ok]
            min_factor = min(min_factor, float(f.min()))
        checked += int(ok.sum())
    return {"checked": checked, "skipped": skipped, "violations": violations,
            "order_violations": order_violations, "min_leg_factor": min_factor,
            "Lambda": k.Lambda,
            "pass": bool(violations == 0 and order_violations == 0 and min_factor >= k.Lambda)}


def expansion_test(table: TableConfig, n_samples: int = 10_000, n_steps: int = 20,
                   seed: int = 0) -> dict:
    """Euclidean growth of unstable vectors along random orbits against C Lambda^n."""
    k = table.constants
    s = sample_mu(table, n_samples, seed, stream=(130,))
    rng = make_rng(seed, 131)
    a, b = cone_bounds_batch(s.wall, s.phi, table, k)
    slope = a + (b - a) * rng.random(n_samples)
    dr = 1.0 / np.sqrt(1.0 + slope ** 2)
    dphi = slope * dr
    lognorm = np.zeros(n_samples)
    w, r, phi = s.wall, s.r, s.phi
    bad = np.zeros(n_samples, bool)
    worst = math.inf
    for n in range(1, n_steps + 1):
        c = disk_centerings(table, n_samples, seed, 1000 + n)
        bt = step_many(w, r, phi, c[:, 0], c[:, 1], table, raise_on_singular=False)
        bad |= bt.singular
        dr, dphi, _ = tangent_many(bt, dr, dphi)
        nrm = np.hypot(dr, dphi)
        lognorm += np.log(nrm)
        dr, dphi = dr / nrm, dphi / nrm
        w, r, phi = bt.wall, bt.r, bt.phi
        margin = lognorm - (math.log(k.C) + n * math.log(k.Lambda))
        worst = min(worst, float(margin[~bad].min()))
    return {"n": int((~bad).sum()), "steps": n_steps, "C": k.C, "Lambda": k.Lambda,
            "min_log_margin": worst, "mean_log_growth_per_step": float(lognorm[~bad].mean() / n_steps),
            "pass": bool(worst >= 0)}


# ---------------------------------------------------------------- tangent map

def tangent_fd_test(table: TableConfig, n: int = 1000, seed: int = 0, h: float = 1e-7,
                    min_margin: float = 1e-4, tol: float = 1e-5) -> dict:
    """Compare the tangent map with central differences of the return map."""
    rng = make_rng(seed, 140)
    got = 0
    rel = []
    attempts = 0
    while got < n:
        m = 4 * (n - got) + 16
        attempts += m
        s = sample_mu(table, m, seed, stream=(141, attempts))
        c = disk_centerings(table, m, seed, 142 + attempts)
        ang = rng.random(m) * 2 * math.pi
        vr, vp = np.cos(ang), np.sin(ang)
        b0 = step_many(s.wall, s.r, s.phi, c[:, 0], c[:, 1], table, raise_on_singular=False)
        rp, pp = s.r + h * vr, s.phi + h * vp
        rm, pm = s.r - h * vr, s.phi - h * vp
        okp = in_cross_section_batch(s.wall, rp, pp, table) & in_cross_section_batch(s.wall, rm, pm, table)
        bp = step_many(s.wall, rp, pp, c[:, 0], c[:, 1], table, raise_on_singular=False)
        bm = step_many(s.wall, rm, pm, c[:, 0], c[:, 1], table, raise_on_singular=False)
        ok = (okp & (b0.margin > min_margin) & ~b0.singular & ~bp.singular & ~bm.singular
              & (bp.wall == b0.wall) & (bm.wall == b0.wall) & (bp.n_c == b0.n_c) & (bm.n_c == b0.n_c))
        fd_r = (bp.r - bm.r) / (2 * h)
        fd_p = (bp.phi - bm.phi) / (2 * h)
        dr, dphi, _ = tangent_many(b0, vr, vp)
        e = np.hypot(fd_r - dr, fd_p - dphi) / np.hypot(fd_r, fd_p)
        take = np.flatnonzero(ok)[: n - got]
        rel.extend(e[take].tolist())
        got += len(take)
    rel = np.array(rel)
    return {"n": int(len(rel)), "max_rel_error": float(rel.max()),
            "median_rel_error": float(np.median(rel)), "h": h, "tol": tol,
            "min_margin": min_margin, "pass": bool(rel.max() < tol)}


# ---------------------------------------------------------------- separation

def separation_test(table: TableConfig, n_pairs: int = 10_000, seed: int = 0, max_n: int = 200,
                    k0: int = 10, log_h=(-9.0, -3.0), tol: float = 1e-6) -> dict:
    """Pairs on short unstable segments; checks log d + s log(Lambda) against
    the bound log(D' Lambda / C) implied by uniform expansion."""
    k = table.constants
    rng = make_rng(seed, 150)
    xs, ys, hs = [], [], []
    have = 0
    while have < n_pairs:
        m = 2 * (n_pairs - have) + 16
        s = sample_mu(table, m, seed, stream=(151, have))
        a, b = cone_bounds_batch(s.wall, s.phi, table, k)
        slope = a + (b - a) * rng.random(m)
        h = 10.0 ** rng.uniform(*log_h, m)
        nr = 1.0 / np.sqrt(1.0 + slope ** 2)
        yr, yp = s.r + h * nr, s.phi + h * slope * nr
        ok = in_cross_section_batch(s.wall, yr, yp, table)
        idx = np.flatnonzero(ok)[: n_pairs - have]
        xs.append(PhaseSample(s.wall[idx], s.r[idx], s.phi[idx]))
        ys.append(PhaseSample(s.wall[idx], yr[idx], yp[idx]))
        hs.append(np.hypot(yr[idx] - s.r[idx], yp[idx] - s.phi[idx]))
        have += len(idx)
    x = PhaseSample(*(np.concatenate([getattr(p, f) for p in xs]) for f in ("wall", "r", "phi")))
    y = PhaseSample(*(np.concatenate([getattr(p, f) for p in ys]) for f in ("wall", "r", "phi")))
    d = np.concatenate(hs)
    centers = np.stack([disk_centerings(table, n_pairs, seed, 2000 + t) for t in range(max_n)])
    s_time, singular = separation_times(x, y, centers, k0, table)
    ok = ~singular & (s_time >= 0)
    score = np.log(d) + s_time * math.log(k.Lambda)
    bound = math.log(k.curve_bound * k.Lambda / k.C)
    exceed = int(np.sum(ok & (score > bound + tol)))
    unsep = int(np.sum(~singular & (s_time < 0)))
    # not separated by max_n means s > max_n: check with the smallest possible s
    unsep_exceed = int(np.sum(~singular & (s_time < 0)
                              & (np.log(d) + (max_n + 1) * math.log(k.Lambda) > bound + tol)))
    return {"pairs": int(ok.sum()), "singular": int(singular.sum()), "not_separated": unsep,
            "bound": bound, "fitted_max": float(score[ok].max()),
            "mean_separation_time": float(s_time[ok].mean()),
            "exceedances": exceed + unsep_exceed, "tol": tol,
            "pass": bool(exceed + unsep_exceed == 0 and ok.sum() > 0)}
