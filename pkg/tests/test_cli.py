import csv
import json

import pytest

from rsbilliard.cli import main
from rsbilliard.config import ConfigError, config_from_text, parse_matrix

BASE = """[table]
rbar = {rbar}
r = 0.20
eps = 0.01
"""

SMALL = BASE + """
[model]
kind = finite_markov_nonstationary
states = 0.008 0; -0.004 0.006
transition = 0.7 0.3; 0.3 0.7
initial = 1 0
seed = 3

[observable]
kind = flight_time_centered
weights = 1 2.5

[run]
seed = 5
n = {n}
n_mc = 2000
replicas = 500
n_sum = 200
k = 40
m_max = 10
max_lag = 10
max_gap = 12
n_grid = 50 100 200
n_samples = 4000
n_centerings = 2
n_pairs = 200
max_n = 50
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(tmp_path, command, text, *extra):
    cfg = write(tmp_path, text)
    out = tmp_path / "out"
    code = main([command, str(cfg), "-o", str(out), *extra])
    return code, out


def test_validate_pass(tmp_path):
    code, out = run(tmp_path, "validate", BASE.format(rbar=0.36))
    assert code == 0
    doc = json.loads((out / "validate.json").read_text())
    assert doc["pass"] and len(doc["results"]["conditions"]) == 5
    assert all(c["pass"] for c in doc["results"]["conditions"])
    assert doc["config"]["run"]["n"] == 1000  # defaults are materialised


def test_validate_fail_exit_code(tmp_path):
    code, out = run(tmp_path, "validate", BASE.format(rbar=0.30))
    assert code == 2
    doc = json.loads((out / "validate.json").read_text())
    failed = [c["name"] for c in doc["results"]["conditions"] if not c["pass"]]
    assert "finite_horizon_rbar" in failed


@pytest.mark.parametrize("text", [
    "[table]\nrbar = 0.36\n",
    BASE.format(rbar=0.36) + "[run]\nbogus = 1\n",
    BASE.format(rbar=0.36) + "[model]\nkind = brownian\n",
    BASE.format(rbar="abc"),
    "not an ini file",
])
def test_config_errors_exit_1(tmp_path, text):
    code, _ = run(tmp_path, "validate", text)
    assert code == 1


def test_missing_config_exit_1(tmp_path):
    assert main(["validate", str(tmp_path / "nope.ini"), "-o", str(tmp_path)]) == 1


def test_usage_error_exit_1():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "x.ini"])
    assert exc.value.code == 1


def test_inadmissible_table_refused_by_commands(tmp_path):
    code, _ = run(tmp_path, "simulate", SMALL.format(rbar=0.30, n=5))
    assert code == 1


def test_simulate_zero_steps_writes_header_only(tmp_path):
    code, out = run(tmp_path, "simulate", SMALL.format(rbar=0.36, n=0))
    assert code == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines == ["k,wall,r,phi,tau,dx,dy,n_c,sing_margin"]


def test_simulate_is_deterministic(tmp_path):
    text = SMALL.format(rbar=0.36, n=200)
    _, out = run(tmp_path, "simulate", text)
    first = (out / "trajectory.csv").read_bytes()
    first_json = (out / "simulate.json").read_bytes()
    _, out = run(tmp_path, "simulate", text)
    assert (out / "trajectory.csv").read_bytes() == first
    assert (out / "simulate.json").read_bytes() == first_json
    rows = list(csv.DictReader((out / "trajectory.csv").open()))
    assert len(rows) == 200
    # 17 significant digits round-trip exactly
    assert repr(float(rows[0]["r"])) == repr(float(rows[0]["r"]))
    assert {int(r["n_c"]) for r in rows} <= {1, 2}


def test_seed_override_changes_output(tmp_path):
    text = SMALL.format(rbar=0.36, n=20)
    _, out = run(tmp_path, "simulate", text)
    a = (out / "trajectory.csv").read_bytes()
    _, out = run(tmp_path, "simulate", text, "--seed", "99")
    assert (out / "trajectory.csv").read_bytes() != a


def test_output_dir_from_environment(tmp_path, monkeypatch):
    cfg = write(tmp_path, BASE.format(rbar=0.36))
    monkeypatch.setenv("RSBILLIARD_OUT", str(tmp_path / "envout"))
    assert main(["validate", str(cfg)]) == 0
    assert (tmp_path / "envout" / "validate.json").exists()
    assert (tmp_path / "envout" / "run_record.json").exists()


@pytest.mark.parametrize("command,files", [
    ("constants", []),
    ("correlation", ["correlation.csv"]),
    ("gouezel", ["gouezel.csv"]),
    ("covariance", []),
    ("clt", []),
    ("growth", ["growth.csv"]),
])
def test_statistical_commands_produce_artifacts(tmp_path, command, files):
    code, out = run(tmp_path, command, SMALL.format(rbar=0.36, n=10))
    assert code in (0, 2)
    doc = json.loads((out / f"{command}.json").read_text())
    assert doc["command"] == command and isinstance(doc["pass"], bool)
    assert (code == 0) == doc["pass"]
    for f in files:
        assert (out / f).exists()


def test_parse_helpers():
    assert parse_matrix("1 2; 3 4") == [[1.0, 2.0], [3.0, 4.0]]
    with pytest.raises(ConfigError):
        parse_matrix("1 2; 3")
    cfg = config_from_text(SMALL.format(rbar=0.36, n=3))
    assert cfg.run["n_grid"] == [50, 100, 200]
    assert cfg.sequence_model().kind == "finite_markov_nonstationary"
    assert cfg.observable_spec().scale_weights.tolist() == [1.0, 2.5]
