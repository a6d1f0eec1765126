"""Estimators for correlations, limit covariances and CLT diagnostics.

All estimators follow the scikit-learn estimator protocol: hyperparameters
are set in ``__init__``, ``fit``/``partial_fit`` consume arrays of
observable values of shape (n_samples, n_time, d) (or partial sums), and
fitted attributes end in an underscore.  Standard errors come from batch
means over independent replicas, assigned round-robin to ``n_batches``
groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted


def _as_paths(A, min_time: int = 1) -> np.ndarray:
    A = np.asarray(A, float)
    if A.ndim == 2:
        A = A[:, :, None]
    if A.ndim != 3:
        raise ValueError("expected an array of shape (n_samples, n_time, d)")
    if A.shape[1] < min_time:
        raise ValueError(f"need at least {min_time} time steps, got {A.shape[1]}")
    if not np.all(np.isfinite(A)):
        raise ValueError("observable values must be finite")
    return A


class _BatchMeans(BaseEstimator):
    """Round-robin batch accumulation shared by the estimators below."""

    def _reset(self):
        for name in list(vars(self)):
            if name.endswith("_") and not name.startswith("__"):
                delattr(self, name)

    def _accumulate(self, **arrays):
        B = self.n_batches
        if B < 2:
            raise ValueError("n_batches must be >= 2")
        n = len(next(iter(arrays.values())))
        if not hasattr(self, "n_samples_"):
            self.n_samples_ = 0
            self.batch_counts_ = np.zeros(B)
            self.batch_sums_ = {k: np.zeros((B,) + v.shape[1:], v.dtype) for k, v in arrays.items()}
        idx = (self.n_samples_ + np.arange(n)) % B
        for b in range(B):
            sel = idx == b
            if sel.any():
                self.batch_counts_[b] += sel.sum()
                for k, v in arrays.items():
                    self.batch_sums_[k][b] += v[sel].sum(axis=0)
        self.n_samples_ += n

    def _means(self):
        """Overall and per-batch means of each accumulated quantity."""
        tot = {k: v.sum(axis=0) / self.n_samples_ for k, v in self.batch_sums_.items()}
        per = {}
        with np.errstate(invalid="ignore", divide="ignore"):
            for k, v in self.batch_sums_.items():
                per[k] = v / self.batch_counts_.reshape((-1,) + (1,) * (v.ndim - 1))
        return tot, per

    @staticmethod
    def _se(batch_estimates):
        B = len(batch_estimates)
        return np.std(batch_estimates, axis=0, ddof=1) / math.sqrt(B)


# ---------------------------------------------------------------- correlations

class PairCorrelation(_BatchMeans):
    """Lagged covariance E[A_0 (x) A_n] - E[A_0] (x) E[A_n] for n <= max_lag."""

    def __init__(self, max_lag: int = 30, n_batches: int = 32):
        self.max_lag = max_lag
        self.n_batches = n_batches

    def fit(self, A, y=None):
        self._reset()
        return self.partial_fit(A)

    def partial_fit(self, A, y=None):
        A = _as_paths(A, self.max_lag + 1)
        L = self.max_lag + 1
        a0 = A[:, 0, :]
        al = A[:, :L, :]
        prod = np.einsum("nd,nle->nlde", a0, al)
        self._accumulate(prod=prod, a0=a0, al=al)
        self._finish()
        return self

    def _finish(self):
        tot, per = self._means()

        def est(p, m0, ml):
            return p - np.einsum("...d,...le->...lde", m0, ml)

        self.correlation_ = est(tot["prod"], tot["a0"], tot["al"])
        batch = est(per["prod"], per["a0"], per["al"])
        self.standard_error_ = self._se(batch)
        self.lags_ = np.arange(self.max_lag + 1)


def exp_decay_fit(lags, values, se, min_ratio: float = 3.0):
    """Weighted fit of log|values| = log A + n log(lam) on points whose
    magnitude exceeds ``min_ratio`` standard errors.

    Returns (A, lam, mask of points used); nan when fewer than 2 points.
    """
    lags = np.asarray(lags, float)
    mag = np.abs(np.asarray(values, float))
    se = np.asarray(se, float)
    use = mag > min_ratio * se
    if use.sum() < 2:
        return math.nan, math.nan, use
    w = mag[use] / se[use]
    coef = np.polyfit(lags[use], np.log(mag[use]), 1, w=w)
    return float(math.exp(coef[1])), float(math.exp(coef[0])), use


class GouezelCovariance(_BatchMeans):
    """Characteristic-function covariance between two groups of blocks.

    Blocks are [b_i, b_{i+1}) for consecutive ``block_boundaries``.  Blocks
    with index < ``split`` form the first group; the others are shifted by
    the gap k.  ``t_vectors`` holds one vector per block or one per time
    index covered by the blocks.
    """

    def __init__(self, block_boundaries=(0, 5, 10), t_vectors=((0.5,), (0.5,)), max_gap: int = 30,
                 split: int | None = None, n_batches: int = 32):
        self.block_boundaries = block_boundaries
        self.t_vectors = t_vectors
        self.max_gap = max_gap
        self.split = split
        self.n_batches = n_batches

    def _weights(self, d):
        b = np.asarray(self.block_boundaries, int)
        if b.ndim != 1 or len(b) < 3 or np.any(np.diff(b) <= 0) or b[0] < 0:
            raise ValueError("block_boundaries must be >= 3 strictly increasing nonnegative integers")
        nb = len(b) - 1
        split = nb // 2 if self.split is None else int(self.split)
        if not 1 <= split < nb:
            raise ValueError("split must leave at least one block in each group")
        t = np.asarray(self.t_vectors, float).reshape(-1, d) if len(self.t_vectors) else np.zeros((0, d))
        span = b[-1] - b[0]
        if len(t) == nb:
            per_index = np.repeat(t, np.diff(b), axis=0)
        elif len(t) == span:
            per_index = t
        else:
            raise ValueError("t_vectors must have one entry per block or per covered index")
        return b, split, per_index

    def fit(self, A, y=None):
        self._reset()
        return self.partial_fit(A)

    def partial_fit(self, A, y=None):
        A = np.asarray(A, float)
        if A.ndim == 2:
            A = A[:, :, None]
        b, split, tw = self._weights(A.shape[2])
        K = self.max_gap + 1
        need = b[-1] + self.max_gap
        A = _as_paths(A, need)
        # projected block sums t_j . A_j, second group shifted by k
        cut = b[split]
        first = np.einsum("ntd,td->n", A[:, b[0]:cut], tw[: cut - b[0]])
        second = np.zeros((len(A), K))
        tw2 = tw[cut - b[0]:]
        for k in range(K):
            second[:, k] = np.einsum("ntd,td->n", A[:, cut + k: b[-1] + k], tw2)
        e1 = np.exp(1j * first)
        e2 = np.exp(1j * second)
        e12 = e1[:, None] * e2
        self._accumulate(e12=e12, e1=e1, e2=e2)
        tot, per = self._means()
        cov = tot["e12"] - tot["e1"] * tot["e2"]
        bcov = per["e12"] - per["e1"][:, None] * per["e2"]
        self.covariance_ = cov
        self.magnitude_ = np.abs(cov)
        se_re = self._se(bcov.real)
        se_im = self._se(bcov.imag)
        self.standard_error_ = np.sqrt(se_re ** 2 + se_im ** 2)
        self.gaps_ = np.arange(K)
        return self


# ---------------------------------------------------------------- covariance

@dataclass
class CovarianceEstimate:
    sigma2: np.ndarray
    standard_errors: np.ndarray
    m_max: int
    k: int
    samples: int
    V: np.ndarray = field(default=None, repr=False)
    V_se: np.ndarray = field(default=None, repr=False)
    trace: np.ndarray = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.sigma2.shape[0]

    def to_dict(self) -> dict:
        out = {"sigma2": self.sigma2.tolist(), "standard_errors": self.standard_errors.tolist(),
               "m_max": self.m_max, "k": self.k, "samples": self.samples}
        if self.V is not None:
            out["V_norm"] = np.linalg.norm(self.V, axis=(1, 2)).tolist()
        return out


class ShiftAveragedCovariance(_BatchMeans):
    """Series estimator of the limit covariance with shift averaging.

    Each replica is a path (x ~ mu, omega ~ P) of length at least
    k + m_max.  By invariance of mu under every return map, the products
    A_l (x) A_{l+m} along the path estimate V_m at the shifted sequence, so
    one path yields all shifts l < k.  ``k = 1`` gives the naive,
    non-averaged estimator.
    """

    def __init__(self, m_max: int = 30, k: int = 50, n_batches: int = 32):
        self.m_max = m_max
        self.k = k
        self.n_batches = n_batches

    def fit(self, A, y=None):
        self._reset()
        return self.partial_fit(A)

    def partial_fit(self, A, y=None):
        if self.m_max < 0 or self.k < 1:
            raise ValueError("need m_max >= 0 and k >= 1")
        k, M = self.k, self.m_max
        A = _as_paths(A, k + M)
        head = A[:, :k, :]
        per_m = np.empty((len(A), M + 1) + (A.shape[2],) * 2)
        shift_total = np.zeros((k,) + (A.shape[2],) * 2)
        for m in range(M + 1):
            prod = np.einsum("nld,nle->nlde", head, A[:, m:m + k, :])
            if m:
                prod = prod + np.swapaxes(prod, -1, -2)
            per_m[:, m] = prod.mean(axis=1)
            shift_total += prod.sum(axis=0)
        self._accumulate(V=per_m)
        self._shift_sum = getattr(self, "_shift_sum", 0) + shift_total
        tot, per = self._means()
        self.V_ = tot["V"]
        self.V_se_ = self._se(per["V"])
        s = tot["V"].sum(axis=0)
        self.sigma2_ = 0.5 * (s + s.T)
        bs = per["V"].sum(axis=1)
        bs = 0.5 * (bs + np.swapaxes(bs, -1, -2))
        self.standard_errors_ = self._se(bs)
        # running shift average <.>_j for j = 1..k (convergence trace)
        per_shift = self._shift_sum / self.n_samples_
        self.trace_ = np.cumsum(per_shift, axis=0) / np.arange(1, k + 1)[:, None, None]
        return self

    def _reset(self):
        super()._reset()
        self._shift_sum = 0

    @property
    def estimate_(self) -> CovarianceEstimate:
        check_is_fitted(self, "sigma2_")
        return CovarianceEstimate(self.sigma2_, self.standard_errors_, self.m_max, self.k,
                                  self.n_samples_, self.V_, self.V_se_, self.trace_)


def birkhoff_partial_sums(A, n_grid, ell: int = 0) -> np.ndarray:
    """Sums of A over [ell, ell + n) for each n in ``n_grid``; shape (N, G, d)."""
    A = _as_paths(A)
    n_grid = np.asarray(n_grid, int)
    if ell + n_grid.max() > A.shape[1]:
        raise ValueError("paths too short for the requested sums")
    P = np.concatenate([np.zeros((A.shape[0], 1, A.shape[2])), np.cumsum(A, axis=1)], axis=1)
    return P[:, ell + n_grid, :] - P[:, [ell], :]


class BirkhoffCovariance(_BatchMeans):
    """Second moments E[S_n (x) S_n] of centred Birkhoff sums.

    ``fit`` takes partial sums of shape (n_samples, len(n_grid), d).  The
    moment is taken about zero because every centred observable has exact
    zero mean.
    """

    def __init__(self, n_grid=(10_000,), n_batches: int = 32):
        self.n_grid = n_grid
        self.n_batches = n_batches

    def fit(self, S, y=None):
        self._reset()
        return self.partial_fit(S)

    def partial_fit(self, S, y=None):
        S = np.asarray(S, float)
        if S.ndim == 2:
            S = S[:, :, None]
        if S.shape[1] != len(self.n_grid):
            raise ValueError("second axis must match n_grid")
        self._accumulate(ss=np.einsum("ngd,nge->ngde", S, S), s=S)
        tot, per = self._means()
        self.covariance_ = tot["ss"]
        self.covariance_se_ = self._se(per["ss"])
        n = np.asarray(self.n_grid, float)[:, None, None]
        self.scaled_ = self.covariance_ / n
        self.scaled_se_ = self.covariance_se_ / n
        self.mean_ = tot["s"]
        self.mean_se_ = self._se(per["s"])
        return self


def compare_covariances(a, a_se, b, b_se, n_sigma: float = 3.0) -> dict:
    """Entrywise agreement of two covariance estimates within combined SE."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    comb = np.sqrt(np.atleast_2d(a_se) ** 2 + np.atleast_2d(b_se) ** 2)
    z = np.abs(a - b) / np.where(comb > 0, comb, np.inf)
    z = np.where((comb == 0) & (a == b), 0.0, z)
    return {"max_z": float(np.max(z)), "pass": bool(np.max(z) <= n_sigma), "z": z.tolist()}


def positive_definiteness_report(sigma2, n_sigma: float = 3.0) -> dict:
    """Spectrum of a covariance estimate with first-order eigenvalue errors.

    Eigenvalues within ``n_sigma`` errors of zero are flagged as possibly
    degenerate (a coboundary direction), never declared degenerate.
    """
    if isinstance(sigma2, CovarianceEstimate):
        S, se = sigma2.sigma2, sigma2.standard_errors
    else:
        S, se = np.atleast_2d(np.asarray(sigma2, float)), None
    if not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValueError("covariance must be symmetric")
    w, v = np.linalg.eigh(0.5 * (S + S.T))
    if se is None:
        ew_se = np.zeros_like(w)
    else:
        ew_se = np.sqrt(np.einsum("ji,ki,jk->i", v ** 2, v ** 2, np.atleast_2d(se) ** 2))
    tol = np.maximum(n_sigma * ew_se, 1e-12 * max(1.0, np.abs(w).max()))
    flagged = np.abs(w) <= tol
    return {
        "eigenvalues": w.tolist(),
        "eigenvalue_se": ew_se.tolist(),
        "psd_within_noise": bool(np.all(w >= -tol)),
        "possibly_degenerate": flagged.tolist(),
        "rank": int(np.sum(~flagged)),
    }


# ---------------------------------------------------------------- CLT

class CLTDiagnostics(BaseEstimator):
    """Normality checks for scaled sums against a covariance estimate.

    Per-coordinate Kolmogorov-Smirnov tests against N(0, sigma2_ii) plus
    Mardia skewness and kurtosis on the non-degenerate subspace; all
    p-values are Bonferroni corrected and compared with ``alpha``.
    """

    def __init__(self, alpha: float = 1e-3, min_samples: int = 500, rank_tol: float = 1e-10):
        self.alpha = alpha
        self.min_samples = min_samples
        self.rank_tol = rank_tol

    def fit(self, X, y=None, sigma2=None):
        X = np.asarray(X, float)
        if X.ndim == 1:
            X = X[:, None]
        if len(X) < self.min_samples:
            raise ValueError(f"need at least {self.min_samples} samples")
        if sigma2 is None:
            raise ValueError("sigma2 is required")
        if isinstance(sigma2, CovarianceEstimate):
            sigma2 = sigma2.sigma2
        S = np.atleast_2d(np.asarray(sigma2, float))
        n, d = X.shape
        w, v = np.linalg.eigh(0.5 * (S + S.T))
        keep = w > self.rank_tol * max(1.0, np.abs(w).max())
        self.rank_ = int(keep.sum())
        ks_stat, ks_p = [], []
        for j in range(d):
            sd = math.sqrt(max(S[j, j], 0.0))
            if sd == 0:
                ks_stat.append(math.nan)
                ks_p.append(math.nan)
                continue
            res = stats.kstest(X[:, j] / sd, "norm")
            ks_stat.append(float(res.statistic))
            ks_p.append(float(res.pvalue))
        self.ks_statistic_ = np.array(ks_stat)
        self.ks_pvalue_ = np.array(ks_p)
        Y = X @ v[:, keep]
        self.mardia_skew_, self.mardia_skew_p_, self.mardia_kurt_, self.mardia_kurt_p_ = _mardia(Y)
        pvals = [p for p in ks_p if np.isfinite(p)] + [self.mardia_skew_p_, self.mardia_kurt_p_]
        self.n_tests_ = len(pvals)
        self.adjusted_pvalues_ = np.minimum(np.array(pvals) * self.n_tests_, 1.0)
        self.passed_ = bool(np.all(self.adjusted_pvalues_ > self.alpha))
        return self

    def report(self) -> dict:
        check_is_fitted(self, "passed_")
        return {"ks_statistic": self.ks_statistic_.tolist(), "ks_pvalue": self.ks_pvalue_.tolist(),
                "mardia_skew": self.mardia_skew_, "mardia_skew_p": self.mardia_skew_p_,
                "mardia_kurtosis": self.mardia_kurt_, "mardia_kurtosis_p": self.mardia_kurt_p_,
                "rank": self.rank_, "adjusted_pvalues": self.adjusted_pvalues_.tolist(),
                "alpha": self.alpha, "pass": self.passed_}


def _mardia(Y):
    n, d = Y.shape
    if d == 0:
        return math.nan, 1.0, math.nan, 1.0
    Z = Y - Y.mean(axis=0)
    C = Z.T @ Z / n
    L = np.linalg.cholesky(C)
    W = np.linalg.solve(L, Z.T).T
    G = W @ W.T
    b1 = float((G ** 3).sum() / n ** 2)
    b2 = float((np.diag(G) ** 2).sum() / n)
    skew_stat = n * b1 / 6.0
    dof = d * (d + 1) * (d + 2) / 6.0
    p_skew = float(stats.chi2.sf(skew_stat, dof))
    z = (b2 - d * (d + 2)) / math.sqrt(8.0 * d * (d + 2) / n)
    p_kurt = float(2 * stats.norm.sf(abs(z)))
    return b1, p_skew, b2, p_kurt


def clt_diagnostics(samples, sigma2, alpha: float = 1e-3) -> dict:
    return CLTDiagnostics(alpha=alpha).fit(samples, sigma2=sigma2).report()


# ---------------------------------------------------------------- growth

def log_bound_fit(n, dev, se, n_sigma: float = 3.0) -> dict:
    """Weighted fit dev ~ alpha + beta log n; pass when every residual is
    within ``n_sigma`` standard errors."""
    n = np.asarray(n, float)
    dev = np.asarray(dev, float)
    se = np.maximum(np.asarray(se, float), 1e-300)
    X = np.column_stack([np.ones_like(n), np.log(n)])
    W = 1.0 / se
    coef, *_ = np.linalg.lstsq(X * W[:, None], dev * W, rcond=None)
    resid = dev - X @ coef
    z = np.abs(resid) / se
    return {"alpha": float(coef[0]), "beta": float(coef[1]), "residual_z": z.tolist(),
            "max_residual_z": float(z.max()), "pass": bool(z.max() <= n_sigma)}


class VarianceGrowth(BaseEstimator):
    """Deviation ||Cov(S_n) - n Sigma^2|| over a grid of n.

    ``fit`` takes partial sums (n_samples, len(n_grid), d) and a covariance
    estimate; errors combine the batch-mean error of Cov(S_n) with n times
    the error of Sigma^2.
    """

    def __init__(self, n_grid=(250, 500, 1000, 2000, 4000), n_batches: int = 32):
        self.n_grid = n_grid
        self.n_batches = n_batches

    def fit(self, S, y=None, sigma2=None):
        if sigma2 is None:
            raise ValueError("sigma2 is required")
        if not isinstance(sigma2, CovarianceEstimate):
            s2 = np.atleast_2d(np.asarray(sigma2, float))
            sigma2 = CovarianceEstimate(s2, np.zeros_like(s2), 0, 0, 0)
        bc = BirkhoffCovariance(self.n_grid, self.n_batches).fit(S)
        n = np.asarray(self.n_grid, float)
        diff = bc.covariance_ - n[:, None, None] * sigma2.sigma2[None]
        dev = np.linalg.norm(diff, axis=(1, 2))
        var = bc.covariance_se_ ** 2 + (n[:, None, None] * sigma2.standard_errors[None]) ** 2
        g = np.where(dev[:, None, None] > 0, diff / np.where(dev > 0, dev, 1)[:, None, None], 1.0)
        se = np.sqrt((g ** 2 * var).sum(axis=(1, 2)))
        self.covariance_ = bc.covariance_
        self.covariance_se_ = bc.covariance_se_
        self.deviation_ = dev
        self.deviation_se_ = se
        self.fit_ = log_bound_fit(n, dev, se)
        return self


# ---------------------------------------------------------------- shape checks

def decay_envelope_check(values, se, n_sigma: float = 3.0, tail: int = 10,
                         tail_sigma: float = 4.0, step: int = 5, window=(5, 30)) -> dict:
    """Exponential-decay shape of a correlation sequence.

    The envelope E(n) = |C(0)| lam**n takes the smallest lam that covers
    every lag resolved beyond ``n_sigma`` SE.  Passes when lag 0 is resolved,
    lam < 1, the weighted log-linear fit also has rate below one, and every
    lag obeys |C(n)| <= E(n) + n_sigma SE(n).  The last ``tail`` lags must
    also sit within ``tail_sigma`` SE of zero, which rules out a plateau.
    For lags n in ``window`` resolved beyond 2 * n_sigma SE, the comparison
    |C(n + step)| + n_sigma SE(n + step) < |C(n)| must hold.
    """
    values = np.asarray(values, float)
    se = np.asarray(se, float)
    lags = np.arange(len(values))
    mag = np.abs(values)
    A, lam_fit, used = exp_decay_fit(lags, values, se, n_sigma)
    amp = float(mag[0])
    resolved = bool(used[0])
    lam = 0.0
    for n in lags[used & (lags > 0)]:
        lam = max(lam, (mag[n] / amp) ** (1.0 / n))
    envelope = amp * lam ** lags
    excess = mag - envelope - n_sigma * se
    dominated = bool(np.all(excess <= 0))
    fit_ok = not np.isfinite(lam_fit) or lam_fit < 1
    z = mag[-tail:] / np.where(se[-tail:] > 0, se[-tail:], np.inf)
    floor = bool(np.all(z <= tail_sigma))
    step_fail = []
    lo, hi = window
    for n in range(lo, min(hi, len(values) - 1 - step) + 1):
        if mag[n] > 2 * n_sigma * se[n] and mag[n + step] + n_sigma * se[n + step] >= mag[n]:
            step_fail.append(n)
    ok = resolved and lam < 1 and fit_ok and dominated and floor and not step_fail
    return {"amplitude": amp, "rate": float(lam), "fitted_amplitude": A, "fitted_rate": lam_fit,
            "significant_lags": lags[used].tolist(), "dominated": dominated,
            "envelope_failures": lags[excess > 0].tolist(), "step_failures": step_fail,
            "tail_max_z": float(z.max()), "pass": bool(ok)}


def floor_decay_check(magnitude, se, n_sigma: float = 3.0, tail: int = 10,
                      tail_sigma: float = 4.0) -> dict:
    """Characteristic-function covariance starts above noise and reaches the
    SE floor: |G(0)| > n_sigma SE, the last ``tail`` gaps lie within
    ``tail_sigma`` SE of zero, and nothing after the first third exceeds |G(0)|."""
    mag = np.asarray(magnitude, float)
    se = np.asarray(se, float)
    start = bool(mag[0] > n_sigma * se[0])
    tail_z = mag[-tail:] / np.where(se[-tail:] > 0, se[-tail:], np.inf)
    floor = bool(np.all(tail_z <= tail_sigma))
    third = len(mag) // 3
    bounded = bool(np.all(mag[third:] <= mag[0]))
    return {"start_z": float(mag[0] / se[0]) if se[0] > 0 else math.inf,
            "tail_max_z": float(tail_z.max()), "bounded_by_start": bounded,
            "pass": start and floor and bounded}
