"""Monte Carlo drivers: replica paths, Birkhoff sums and estimator runs.

Replicas start from independent mu-samples and carry independent centering
sequences.  Every replica is generated from a key (seed, stream, chunk), so
a run is reproducible given its arguments.  Replicas whose orbit comes
within the singularity tolerance are discarded and replaced.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import SING_TOL, step_many
from .geometry import TableConfig
from .observables import ObservableSpec
from .phase_space import as_point, sample_mu
from .sequences import SequenceModel
from .statistics import (
    BirkhoffCovariance, CovarianceEstimate, GouezelCovariance, PairCorrelation,
    ShiftAveragedCovariance, VarianceGrowth,
)

log = logging.getLogger(__name__)

DEFAULT_CHUNK = 20_000


@dataclass
class PathChunk:
    values: np.ndarray | None   # (n, n_time, d) observable values
    sums: np.ndarray | None     # (n, len(n_grid), d) partial sums
    discarded: int


@dataclass
class RunTally:
    kept: int = 0
    discarded: int = 0

    @property
    def discard_rate(self) -> float:
        tot = self.kept + self.discarded
        return self.discarded / tot if tot else 0.0


def _evaluate(obs, batch, table):
    if isinstance(obs, ObservableSpec):
        return obs.evaluate(batch, table)
    return np.concatenate([o.evaluate(batch, table) for o in obs], axis=1)


def _dim(obs):
    return obs.d if isinstance(obs, ObservableSpec) else sum(o.d for o in obs)


def iter_paths(table: TableConfig, model: SequenceModel, obs, n_paths: int, n_time: int,
               seed: int, stream: int = 0, chunk: int = DEFAULT_CHUNK, keep_values: bool = True,
               n_grid=None, ell: int = 0, tally: RunTally | None = None, tol: float = SING_TOL):
    """Yield :class:`PathChunk` objects until ``n_paths`` clean replicas exist."""
    d = _dim(obs)
    grid = None if n_grid is None else np.asarray(n_grid, int)
    if grid is not None and ell + grid.max() > n_time:
        raise ValueError("n_time too short for the requested partial sums")
    produced, j = 0, 0
    tally = tally if tally is not None else RunTally()
    while produced < n_paths:
        m = min(chunk, n_paths - produced)
        x = sample_mu(table, m, seed, stream=(stream, j, 0))
        sampler = model.sampler(m, stream=(seed, stream, j))
        w, r, phi = x.wall, x.r, x.phi
        alive = np.ones(m, bool)
        vals = np.empty((m, n_time, d)) if keep_values else None
        run = np.zeros((m, d))
        marks = {}
        wanted = set() if grid is None else {ell} | set((ell + grid).tolist())
        if 0 in wanted:
            marks[0] = run.copy()
        for t in range(n_time):
            c = sampler.next()
            b = step_many(w, r, phi, c[:, 0], c[:, 1], table, raise_on_singular=False, tol=tol)
            sing = b.singular
            alive &= ~sing
            v = _evaluate(obs, b, table)
            v[~alive] = 0.0
            if keep_values:
                vals[:, t] = v
            if grid is not None:
                run += v
                if t + 1 in wanted:
                    marks[t + 1] = run.copy()
            w = np.where(sing, b.pre_wall, b.wall)
            r = np.where(sing, b.pre_r, b.r)
            phi = np.where(sing, b.pre_phi, b.phi)
        sums = None
        if grid is not None:
            sums = np.stack([marks[ell + n] - marks[ell] for n in grid], axis=1)[alive]
        kept = int(alive.sum())
        tally.kept += kept
        tally.discarded += m - kept
        produced += kept
        j += 1
        if m - kept:
            log.info("discarded %d of %d replicas near singularities", m - kept, m)
        yield PathChunk(vals[alive] if keep_values else None, sums, m - kept)


def collect_values(table, model, obs, n_paths, n_time, seed, stream=0, chunk=DEFAULT_CHUNK,
                   tally=None) -> np.ndarray:
    parts = [c.values for c in iter_paths(table, model, obs, n_paths, n_time, seed, stream,
                                          chunk, tally=tally)]
    return np.concatenate(parts)[:n_paths] if parts else np.zeros((0, n_time, _dim(obs)))


# ---------------------------------------------------------------- estimators

def _fit_streaming(estimator, table, model, obs, n_paths, n_time, seed, stream, chunk, tally):
    first = True
    for part in iter_paths(table, model, obs, n_paths, n_time, seed, stream, chunk, tally=tally):
        if first:
            estimator.fit(part.values)
            first = False
        else:
            estimator.partial_fit(part.values)
    return estimator


def pair_correlations(obs, model, table, max_lag=30, n_mc=100_000, seed=0, stream=0,
                      chunk=DEFAULT_CHUNK, tally=None) -> PairCorrelation:
    """Lagged correlations of ``obs`` for lags 0..max_lag."""
    est = PairCorrelation(max_lag=max_lag)
    return _fit_streaming(est, table, model, obs, n_mc, max_lag + 1, seed, stream, chunk, tally)


def pair_correlation(f: ObservableSpec, g: ObservableSpec, model, n: int, n_mc: int, seed: int,
                     table: TableConfig, stream: int = 0):
    """Estimate and standard error of the covariance of f and g composed
    with n return maps."""
    if n < 0:
        raise ValueError("n must be >= 0")
    est = pair_correlations([f, g], model, table, n, n_mc, seed, stream)
    i, j = 0, f.d
    return float(est.correlation_[n, i, j]), float(est.standard_error_[n, i, j])


def gouezel_profile(block_boundaries, t_vectors, model, table, obs, max_gap=30, split=None,
                    n_mc=100_000, seed=0, stream=0, chunk=DEFAULT_CHUNK, tally=None):
    est = GouezelCovariance(block_boundaries, t_vectors, max_gap, split)
    n_time = int(np.max(block_boundaries)) + max_gap
    return _fit_streaming(est, table, model, obs, n_mc, n_time, seed, stream, chunk, tally)


def gouezel_covariance(block_boundaries, t_vectors, k: int, model, n_mc: int, seed: int,
                       table: TableConfig, obs: ObservableSpec, split=None):
    """Magnitude and standard error of the block characteristic-function
    covariance at gap k."""
    t = np.asarray(t_vectors, float)
    if t.size and not np.any(t):
        return 0.0, 0.0
    est = gouezel_profile(block_boundaries, t_vectors, model, table, obs, k, split, n_mc, seed)
    return float(est.magnitude_[k]), float(est.standard_error_[k])


def estimate_sigma2(obs, model, m_max=30, k=50, n_mc=20_000, seed=0, table=None, stream=0,
                    chunk=DEFAULT_CHUNK, tally=None) -> CovarianceEstimate:
    """Shift-averaged series estimate of the limit covariance."""
    if m_max < 1 or k < 1:
        raise ValueError("need m_max >= 1 and k >= 1")
    est = ShiftAveragedCovariance(m_max=m_max, k=k)
    if obs.kind == "tabulated" and obs.values is not None and not np.any(obs.values):
        d = obs.d
        return CovarianceEstimate(np.zeros((d, d)), np.zeros((d, d)), m_max, k, 0)
    chunk = max(1, min(chunk, int(4e7 // ((k + m_max) * obs.d * 8))))
    _fit_streaming(est, table, model, obs, n_mc, k + m_max, seed, stream, chunk, tally)
    return est.estimate_


def birkhoff_sums(table, model, obs, n_grid, n_paths, seed, stream=0, ell=0,
                  chunk=DEFAULT_CHUNK, tally=None) -> np.ndarray:
    """Partial sums over [ell, ell+n) for n in ``n_grid``; shape (N, G, d)."""
    n_grid = np.asarray(n_grid, int)
    parts = [c.sums for c in iter_paths(table, model, obs, n_paths, ell + int(n_grid.max()), seed,
                                        stream, chunk, keep_values=False, n_grid=n_grid, ell=ell,
                                        tally=tally)]
    return np.concatenate(parts)[:n_paths]


def empirical_covariance(obs, model, table, n, n_paths, seed, stream=0, tally=None):
    """Returns (BirkhoffCovariance fitted at n, scaled sums S_n / sqrt(n))."""
    S = birkhoff_sums(table, model, obs, [n], n_paths, seed, stream, tally=tally)
    bc = BirkhoffCovariance([n]).fit(S)
    return bc, S[:, 0, :] / math.sqrt(n)


def variance_growth(obs, model, n_grid, ell, n_mc, seed, table, sigma2, stream=0, tally=None):
    """Deviations ||Cov(S_{n,ell}) - n Sigma^2|| over ``n_grid``.

    Returns the fitted :class:`VarianceGrowth` estimator.
    """
    S = birkhoff_sums(table, model, obs, n_grid, n_mc, seed, stream, ell, tally=tally)
    return VarianceGrowth(n_grid).fit(S, sigma2=sigma2)


def birkhoff_sum(x0, omega, n: int, obs: ObservableSpec, table: TableConfig) -> np.ndarray:
    """Sum of the observable along one orbit under ``omega[:n]``."""
    x = as_point(x0)
    omega = np.asarray(omega, float).reshape(-1, 2)
    if len(omega) < n:
        raise ValueError("omega shorter than n")
    total = np.zeros(obs.d)
    w, r, phi = np.array([x.wall]), np.array([x.r]), np.array([x.phi])
    for i in range(n):
        b = step_many(w, r, phi, omega[i, 0], omega[i, 1], table)
        total += obs.evaluate(b, table)[0]
        w, r, phi = b.wall, b.r, b.phi
    return total

