"""Random centering sequences and their mixing diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .rng import make_rng

KINDS = ("fixed", "iid_uniform_disk", "finite_markov", "finite_markov_nonstationary")


def _as_stochastic(P) -> np.ndarray:
    P = np.asarray(P, float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("transition matrix must be square")
    if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("transition rows must be nonnegative and sum to 1")
    return P


def check_irreducible_aperiodic(P) -> None:
    """Raise unless some power of P is strictly positive (primitive chain)."""
    P = _as_stochastic(P)
    n = len(P)
    Q = (P > 0).astype(float)
    M = np.eye(n)
    # Wielandt bound on the primitivity exponent
    for _ in range((n - 1) ** 2 + 1):
        M = np.minimum(M @ Q, 1.0)
    if not np.all(M > 0):
        raise ValueError("transition matrix is reducible or periodic")


def stationary_distribution(P) -> np.ndarray:
    P = _as_stochastic(P)
    check_irreducible_aperiodic(P)
    w, v = linalg.eig(P.T)
    k = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(v[:, k])
    pi = pi / pi.sum()
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def markov_rho(transition, k: int) -> float:
    """Maximal correlation between X_0 and X_k for the stationary chain."""
    P = _as_stochastic(transition)
    if k < 0:
        raise ValueError("k must be >= 0")
    pi = stationary_distribution(P)
    s = np.sqrt(pi)
    A = (s[:, None] * np.linalg.matrix_power(P, k)) / s[None, :]
    sv = np.linalg.svd(A, compute_uv=False)
    return float(sv[1]) if len(sv) > 1 else 0.0


def shift_average(per_shift_values, k: int):
    """Mean of the first ``k`` shifted expectations."""
    if k < 1:
        raise ValueError("k must be >= 1")
    vals = np.asarray(per_shift_values, float)
    if len(vals) < k:
        raise ValueError(f"need at least k={k} entries, got {len(vals)}")
    return vals[:k].mean(axis=0)


@dataclass(frozen=True)
class SequenceModel:
    """Law of the centering sequence.

    Use the constructors :meth:`fixed`, :meth:`iid`, :meth:`markov` and
    :meth:`markov_nonstationary`.
    """

    kind: str
    eps: float
    states: np.ndarray = field(default=None, repr=False)
    transition: np.ndarray = field(default=None, repr=False)
    initial: np.ndarray = field(default=None, repr=False)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise ValueError("eps must be positive")
        if self.kind == "iid_uniform_disk":
            return
        states = np.asarray(self.states, float).reshape(-1, 2)
        if np.any(np.hypot(states[:, 0], states[:, 1]) > self.eps * (1 + 1e-12)):
            raise ValueError("every state must satisfy |c| <= eps")
        object.__setattr__(self, "states", states)
        if self.kind == "fixed":
            if len(states) != 1:
                raise ValueError("fixed model takes exactly one centering")
            return
        P = _as_stochastic(self.transition)
        if P.shape[0] != len(states):
            raise ValueError("transition size must match the number of states")
        pi = stationary_distribution(P)
        object.__setattr__(self, "transition", P)
        if self.kind == "finite_markov":
            object.__setattr__(self, "initial", pi)
        else:
            init = np.asarray(self.initial, float)
            if init.shape != pi.shape or np.any(init < 0) or not np.isclose(init.sum(), 1.0):
                raise ValueError("initial law must be a probability vector over the states")
            if np.allclose(init, pi, atol=1e-12):
                raise ValueError("nonstationary model needs an initial law other than the stationary one")
            object.__setattr__(self, "initial", init / init.sum())

    # constructors
    @classmethod
    def fixed(cls, c, eps, seed=0):
        return cls("fixed", float(eps), states=np.asarray(c, float).reshape(1, 2), seed=seed)

    @classmethod
    def iid(cls, eps, seed=0):
        return cls("iid_uniform_disk", float(eps), seed=seed)

    @classmethod
    def markov(cls, states, transition, eps, seed=0):
        return cls("finite_markov", float(eps), states=states, transition=transition, seed=seed)

    @classmethod
    def markov_nonstationary(cls, states, transition, initial, eps, seed=0):
        return cls("finite_markov_nonstationary", float(eps), states=states,
                   transition=transition, initial=initial, seed=seed)

    @property
    def is_markov(self) -> bool:
        return self.kind.startswith("finite_markov")

    @property
    def is_stationary(self) -> bool:
        return self.kind != "finite_markov_nonstationary"

    @property
    def stationary(self) -> np.ndarray | None:
        return stationary_distribution(self.transition) if self.is_markov else None

    def rho(self, k: int) -> float:
        """Maximal correlation at lag k (0 for fixed and iid laws when k >= 1)."""
        if self.is_markov:
            return markov_rho(self.transition, k)
        return 1.0 if k == 0 else 0.0

    def state_law(self, n: int) -> np.ndarray | None:
        """Distribution of the state index at time n."""
        if not self.is_markov:
            return None
        return self.initial @ np.linalg.matrix_power(self.transition, n)

    def sampler(self, n_paths: int, stream: int = 0) -> "BatchSampler":
        return BatchSampler(self, n_paths, stream)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "eps": self.eps, "seed": self.seed}
        if self.states is not None:
            out["states"] = self.states.tolist()
        if self.is_markov:
            out["transition"] = self.transition.tolist()
            out["initial"] = self.initial.tolist()
        return out


class BatchSampler:
    """Draws time slices of ``n_paths`` independent sequences in lockstep.

    The output is a deterministic function of (model.seed, stream, n_paths).
    """

    def __init__(self, model: SequenceModel, n_paths: int, stream: int = 0):
        self.model = model
        self.n_paths = int(n_paths)
        self.rng = make_rng(model.seed, stream)
        self.t = 0
        self.state = None
        if model.is_markov:
            self._cum = np.cumsum(model.transition, axis=1)
            self._cum[:, -1] = 1.0

    def next_states(self) -> np.ndarray | None:
        m = self.model
        if not m.is_markov:
            return None
        u = self.rng.random(self.n_paths)
        if self.state is None:
            cum = np.cumsum(m.initial)
            cum[-1] = 1.0
            self.state = np.searchsorted(cum, u, side="right")
        else:
            self.state = (u[:, None] >= self._cum[self.state]).sum(axis=1)
        return self.state

    def next(self) -> np.ndarray:
        """Centerings at the next time index, shape (n_paths, 2)."""
        m = self.model
        self.t += 1
        if m.kind == "fixed":
            return np.repeat(m.states, self.n_paths, axis=0)
        if m.kind == "iid_uniform_disk":
            rad = m.eps * np.sqrt(self.rng.random(self.n_paths))
            ang = 2 * math.pi * self.rng.random(self.n_paths)
            return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        return m.states[self.next_states()]

    def take(self, length: int) -> np.ndarray:
        """Next ``length`` slices, shape (length, n_paths, 2)."""
        return np.stack([self.next() for _ in range(length)]) if length else np.zeros((0, self.n_paths, 2))


def draw_sequence(model: SequenceModel, length: int, stream: int = 0) -> np.ndarray:
    """One centering sequence of shape (length, 2)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    return model.sampler(1, stream).take(length)[:, 0, :]
