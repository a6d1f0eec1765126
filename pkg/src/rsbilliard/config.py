"""INI-style run configuration with sections [table], [model], [observable], [run].

Vectors are whitespace separated; matrices are rows separated by ';',
e.g. ``transition = 0.7 0.3; 0.3 0.7``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .geometry import TableConfig
from .observables import ObservableSpec
from .sequences import KINDS, SequenceModel

RUN_DEFAULTS = {
    "seed": 0,
    "n": 1000,
    "n_mc": 100_000,
    "m_max": 30,
    "k": 50,
    "max_lag": 30,
    "replicas": 2000,
    "n_sum": 10_000,
    "n_grid": [250, 500, 1000, 2000, 4000],
    "ell": 0,
    "block_boundaries": [0, 5, 10],
    "t_vectors": [[0.5], [0.5]],
    "split": 1,
    "max_gap": 30,
    "k0": 10,
    "n_samples": 100_000,
    "n_centerings": 100,
    "n_pairs": 10_000,
    "max_n": 200,
    "mu_samples": 0,
    "alpha": 0.001,
}

MODEL_DEFAULTS = {"kind": "fixed", "c": [0.0, 0.0], "seed": 0}
OBS_DEFAULTS = {"kind": "flight_time_centered", "weights": None, "coboundary": False,
                "n_r": 8, "n_phi": 8, "table_seed": 0}


class ConfigError(ValueError):
    pass


def parse_vector(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def parse_matrix(text: str) -> list:
    rows = [r for r in text.split(";") if r.strip()]
    out = [parse_vector(r) for r in rows]
    if len({len(r) for r in out}) > 1:
        raise ConfigError(f"ragged matrix {text!r}")
    return out


@dataclass
class RunConfig:
    table: dict
    model: dict = field(default_factory=dict)
    observable: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)

    def table_config(self, check: bool = True) -> TableConfig:
        return TableConfig(self.table["rbar"], self.table["r"], self.table["eps"], check=check)

    def sequence_model(self) -> SequenceModel:
        m = self.model
        eps = self.table["eps"]
        kind = m["kind"]
        if kind == "fixed":
            return SequenceModel.fixed(m["c"], eps, seed=m["seed"])
        if kind == "iid_uniform_disk":
            return SequenceModel.iid(eps, seed=m["seed"])
        if kind == "finite_markov":
            return SequenceModel.markov(m["states"], m["transition"], eps, seed=m["seed"])
        return SequenceModel.markov_nonstationary(m["states"], m["transition"], m["initial"], eps,
                                                  seed=m["seed"])

    def observable_spec(self, table: TableConfig | None = None) -> ObservableSpec:
        table = table or self.table_config()
        o = self.observable
        kw = {}
        if o.get("weights") is not None:
            states = self.model.get("states")
            if states is None:
                raise ConfigError("observable weights need markov states")
            if len(states) != len(o["weights"]):
                raise ConfigError("one weight per markov state is required")
            kw = {"scale_states": states, "scale_weights": o["weights"]}
        if o["kind"] == "flight_time_centered":
            return ObservableSpec.flight_time(table, **kw)
        if o["kind"] == "displacement_centered":
            return ObservableSpec.displacement(table, **kw)
        return ObservableSpec.tabulated(table, n_r=o["n_r"], n_phi=o["n_phi"], seed=o["table_seed"],
                                        coboundary=o["coboundary"], **kw)

    def to_dict(self) -> dict:
        return {"table": dict(self.table), "model": dict(self.model),
                "observable": dict(self.observable), "run": dict(self.run)}


def _get(section, key, conv, default):
    if key not in section:
        return default
    try:
        return conv(section[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {section[key]!r}") from exc


def _int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(text)
    return int(v)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def load_config(path) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return config_from_parser(cp)


def config_from_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return config_from_parser(cp)


def config_from_parser(cp: configparser.ConfigParser) -> RunConfig:
    if "table" not in cp:
        raise ConfigError("missing [table] section")
    t = cp["table"]
    table = {}
    for key in ("rbar", "r", "eps"):
        if key not in t:
            raise ConfigError(f"missing table key {key!r}")
        table[key] = _get(t, key, float, None)

    m = cp["model"] if "model" in cp else {}
    model = dict(MODEL_DEFAULTS)
    model["kind"] = _get(m, "kind", str.strip, model["kind"])
    if model["kind"] not in KINDS:
        raise ConfigError(f"unknown model kind {model['kind']!r}")
    model["seed"] = _get(m, "seed", _int, 0)
    model["c"] = _get(m, "c", parse_vector, [0.0, 0.0])
    if model["kind"].startswith("finite_markov"):
        for key in ("states", "transition"):
            if key not in m:
                raise ConfigError(f"markov model needs {key!r}")
        model["states"] = _get(m, "states", parse_matrix, None)
        model["transition"] = _get(m, "transition", parse_matrix, None)
        if model["kind"] == "finite_markov_nonstationary":
            if "initial" not in m:
                raise ConfigError("nonstationary markov model needs 'initial'")
            model["initial"] = _get(m, "initial", parse_vector, None)
    if model["kind"] != "fixed":
        model.pop("c")

    o = cp["observable"] if "observable" in cp else {}
    obs = dict(OBS_DEFAULTS)
    obs["kind"] = _get(o, "kind", str.strip, obs["kind"])
    if obs["kind"] not in ("flight_time_centered", "displacement_centered", "tabulated"):
        raise ConfigError(f"unknown observable kind {obs['kind']!r}")
    obs["weights"] = _get(o, "weights", parse_vector, None)
    obs["coboundary"] = _get(o, "coboundary", _bool, False)
    obs["n_r"] = _get(o, "n_r", _int, 8)
    obs["n_phi"] = _get(o, "n_phi", _int, 8)
    obs["table_seed"] = _get(o, "table_seed", _int, 0)

    r = cp["run"] if "run" in cp else {}
    run = {}
    for key, default in RUN_DEFAULTS.items():
        if isinstance(default, list):
            conv = parse_matrix if default and isinstance(default[0], list) else parse_vector
        elif isinstance(default, float):
            conv = float
        else:
            conv = _int
        val = _get(r, key, conv, default)
        if key in ("n_grid", "block_boundaries"):
            val = [int(v) for v in val]
        run[key] = val
    unknown = set(r) - set(RUN_DEFAULTS) if r else set()
    unknown -= set(cp.defaults())
    if unknown:
        raise ConfigError(f"unknown [run] keys: {sorted(unknown)}")
    return RunConfig(table, model, obs, run)


def write_example(path) -> None:
    text = """[table]
rbar = 0.36
r = 0.20
eps = 0.01

[model]
kind = iid_uniform_disk
seed = 1

[observable]
kind = flight_time_centered

[run]
seed = 7
n = 1000
"""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)

