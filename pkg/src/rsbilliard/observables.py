"""Observables evaluated on return steps, with their mu-centering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ReturnBatch, step_many
from .geometry import TableConfig, check_centering
from .phase_space import sample_mu
from .rng import make_rng

OBSERVABLE_KINDS = ("flight_time_centered", "displacement_centered", "tabulated")


@dataclass(frozen=True, eq=False)
class ObservableSpec:
    """A vector observable f(c, x) with zero mu-mean for every centering.

    ``scale_states``/``scale_weights`` multiply the centred value by a
    per-centering weight (default 1).  For ``tabulated`` observables
    ``values`` is an array of shape (8, n_r, n_phi, d) of cell values on
    the walls; ``coboundary=True`` turns g into g(x) - g(F_c x).
    ``centering`` maps a centering tuple to its mean vector; unlisted
    centerings fall back to ``default_mean``.
    """

    kind: str
    d: int = 1
    default_mean: np.ndarray = field(default=None, repr=False)
    centering: dict = field(default_factory=dict, repr=False)
    scale_states: np.ndarray = field(default=None, repr=False)
    scale_weights: np.ndarray = field(default=None, repr=False)
    values: np.ndarray = field(default=None, repr=False)
    coboundary: bool = False
    factor: float = 1.0

    def __post_init__(self):
        if self.kind not in OBSERVABLE_KINDS:
            raise ValueError(f"unknown observable kind {self.kind!r}")
        if self.scale_states is not None:
            st = np.asarray(self.scale_states, float).reshape(-1, 2)
            wt = np.asarray(self.scale_weights, float).reshape(-1)
            if len(st) != len(wt):
                raise ValueError("scale_states and scale_weights differ in length")
            object.__setattr__(self, "scale_states", st)
            object.__setattr__(self, "scale_weights", wt)
        if self.default_mean is not None:
            object.__setattr__(self, "default_mean", np.asarray(self.default_mean, float).reshape(self.d))

    # ------------------------------------------------------------ builders
    @classmethod
    def flight_time(cls, table: TableConfig, **kw):
        return cls("flight_time_centered", 1, default_mean=[table.constants.mean_tau], **kw)

    @classmethod
    def displacement(cls, table: TableConfig, **kw):
        return cls("displacement_centered", 2, default_mean=[0.0, 0.0], **kw)

    @classmethod
    def tabulated(cls, table: TableConfig, values=None, n_r=8, n_phi=8, d=1, seed=0,
                  coboundary=False, n_mc=1_000_000, **kw):
        if values is None:
            values = make_rng(seed, 31).normal(size=(8, n_r, n_phi, d))
        values = np.asarray(values, float)
        d = values.shape[-1]
        if coboundary:
            mean = np.zeros(d)
        else:
            s = sample_mu(table, n_mc, seed, stream=32)
            mean = _lookup(values, s.wall, s.r, s.phi, table).mean(axis=0)
        return cls("tabulated", d, default_mean=mean, values=values, coboundary=coboundary, **kw)

    def with_centering(self, centering: dict):
        return _replace(self, centering=dict(centering))

    def scaled(self, a: float):
        return _replace(self, factor=self.factor * float(a))

    def with_weights(self, states, weights):
        return _replace(self, scale_states=states, scale_weights=weights)

    # ------------------------------------------------------------ evaluation
    def raw(self, batch: ReturnBatch, table: TableConfig) -> np.ndarray:
        if self.kind == "flight_time_centered":
            return batch.tau[:, None].copy()
        if self.kind == "displacement_centered":
            return np.column_stack([batch.dx, batch.dy])
        g0 = _lookup(self.values, batch.pre_wall, batch.pre_r, batch.pre_phi, table)
        if not self.coboundary:
            return g0
        return g0 - _lookup(self.values, batch.wall, batch.r, batch.phi, table)

    def means(self, cx, cy) -> np.ndarray:
        n = len(cx)
        out = np.broadcast_to(self.default_mean, (n, self.d)).copy()
        for key, m in self.centering.items():
            hit = (np.abs(cx - key[0]) < 1e-12) & (np.abs(cy - key[1]) < 1e-12)
            out[hit] = m
        return out

    def weights(self, cx, cy) -> np.ndarray:
        w = np.full(len(cx), self.factor)
        if self.scale_states is not None:
            for (sx, sy), wt in zip(self.scale_states, self.scale_weights):
                hit = (np.abs(cx - sx) < 1e-12) & (np.abs(cy - sy) < 1e-12)
                w[hit] = self.factor * wt
        return w

    def evaluate(self, batch: ReturnBatch, table: TableConfig) -> np.ndarray:
        """Centred, weighted values, shape (N, d)."""
        vals = self.raw(batch, table) - self.means(batch.cx, batch.cy)
        return vals * self.weights(batch.cx, batch.cy)[:, None]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "d": self.d, "coboundary": self.coboundary,
               "factor": self.factor,
               "default_mean": None if self.default_mean is None else self.default_mean.tolist()}
        if self.scale_states is not None:
            out["scale_states"] = self.scale_states.tolist()
            out["scale_weights"] = self.scale_weights.tolist()
        if self.values is not None:
            out["table_shape"] = list(self.values.shape)
        return out


def _replace(spec, **changes):
    from dataclasses import replace
    return replace(spec, **changes)


def _lookup(values, wall, r, phi, table: TableConfig) -> np.ndarray:
    n_r, n_phi = values.shape[1], values.shape[2]
    wall = np.asarray(wall, np.int64)
    length = np.where(wall % 2 == 1, 0.5 * math.pi * table.rbar, 1.0 - 2.0 * table.rbar)
    ir = np.clip((np.asarray(r) / length * n_r).astype(np.int64), 0, n_r - 1)
    ip = np.clip(((np.asarray(phi) + 0.5 * math.pi) / math.pi * n_phi).astype(np.int64), 0, n_phi - 1)
    return values[np.clip(wall, 1, 8) - 1, ir, ip]


def estimate_centering(obs: ObservableSpec, c, table: TableConfig, n_mc: int = 100_000,
                       seed: int = 0, n_batches: int = 32):
    """Monte Carlo mu-mean of the raw observable under a fixed centering.

    Returns ``(mean, standard_error)`` vectors of length d.
    """
    if n_mc < 10_000:
        raise ValueError("n_mc must be >= 10^4")
    c = check_centering(c, table)
    s = sample_mu(table, n_mc, seed, stream=(41,))
    batch = step_many(s.wall, s.r, s.phi, c[0], c[1], table, raise_on_singular=False)
    ok = ~batch.singular
    vals = obs.raw(batch, table)[ok]
    groups = np.array_split(vals, n_batches)
    bm = np.array([g.mean(axis=0) for g in groups])
    return vals.mean(axis=0), bm.std(axis=0, ddof=1) / math.sqrt(n_batches)
