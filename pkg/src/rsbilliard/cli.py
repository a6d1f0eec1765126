"""Command-line driver.

Every command reads an INI config, writes ``<command>.json`` (results plus
the fully resolved config) and CSV series into the output directory, and a
``run_record.json`` with timestamps.  Exit status: 0 pass, 2 acceptance
failure, 1 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .dynamics import SingularityProximity, compose
from .geometry import validate_table
from .phase_space import sample_mu
from .sequences import draw_sequence

OUT_ENV = "RSBILLIARD_OUT"
COMMANDS = ("validate", "constants", "simulate", "invariance", "hyperbolicity", "correlation",
            "gouezel", "covariance", "clt", "growth")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _clean(obj):
    """Make numpy scalars/arrays JSON friendly; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# ---------------------------------------------------------------- commands

def cmd_validate(cfg: RunConfig, out: Path):
    rep = validate_table(cfg.table["rbar"], cfg.table["r"], cfg.table["eps"])
    entries = [{"name": c.name, "lhs": c.lhs, "rhs": c.rhs, "pass": c.passed, "slack": c.slack}
               for c in rep.conditions]
    return {"conditions": entries, "L": rep.L}, {}, rep.passed


def cmd_constants(cfg, out):
    t = cfg.table_config()
    from .phase_space import compute_constants
    k = compute_constants(t, n_returns=cfg.run["n_samples"], seed=cfg.run["seed"])
    return {"constants": k.to_dict()}, {}, True


def cmd_simulate(cfg, out):
    t = cfg.table_config()
    run = cfg.run
    n = run["n"]
    model = cfg.sequence_model()
    omega = draw_sequence(model, n, stream=run["seed"]) if n > 0 else np.zeros((0, 2))
    starts = sample_mu(t, 64, run["seed"], stream=(200,))
    traj = None
    for i in range(len(starts)):
        try:
            traj = compose(starts.point(i), omega, n, t)
            break
        except SingularityProximity:
            continue
    if traj is None:
        raise RuntimeError("no non-singular start found")
    rows = [(k, rec.post.wall, rec.post.r, rec.post.phi, rec.tau, rec.displacement[0],
             rec.displacement[1], rec.n_c, rec.sing_margin) for k, rec in enumerate(traj.records)]
    files = {
        "trajectory.csv": (["k", "wall", "r", "phi", "tau", "dx", "dy", "n_c", "sing_margin"], rows),
        "sequence.csv": (["n", "cx", "cy"], [(i, c[0], c[1]) for i, c in enumerate(omega)]),
    }
    if run["mu_samples"] > 0:
        s = sample_mu(t, run["mu_samples"], run["seed"], stream=(201,))
        files["mu_samples.csv"] = (["wall", "r", "phi"], zip(s.wall, s.r, s.phi))
    start = traj.start
    taus = [r[4] for r in rows]
    summary = {"start": {"wall": start.wall, "r": start.r, "phi": start.phi}, "n": n,
               "mean_tau": float(np.mean(taus)) if taus else None,
               "min_sing_margin": float(min((r[8] for r in rows), default=math.inf))}
    return summary, files, True


def cmd_invariance(cfg, out):
    from .experiments import invariance_test, reversibility_test
    t = cfg.table_config()
    run = cfg.run
    inv = invariance_test(t, n=run["n_samples"], seed=run["seed"], alpha=run["alpha"])
    rev = reversibility_test(t, n=min(run["n_samples"], 10_000), seed=run["seed"])
    tests = inv.pop("tests")
    rows = [(r["wall"], r["marginal"], r["statistic"], r["pvalue"]) for r in tests]
    files = {"invariance_tests.csv": (["wall", "marginal", "statistic", "pvalue"], rows)}
    inv["centerings"] = sorted({tuple(r["centering"]) for r in tests})
    return {"invariance": inv, "reversibility": rev}, files, inv["pass"] and rev["pass"]


def cmd_hyperbolicity(cfg, out):
    from .experiments import (
        cone_invariance_test, expansion_test, separation_test, tangent_fd_test,
    )
    t = cfg.table_config()
    run = cfg.run
    res = {
        "cones": cone_invariance_test(t, run["n_samples"], run["n_centerings"], run["seed"]),
        "expansion": expansion_test(t, min(run["n_samples"], 10_000), 20, run["seed"]),
        "tangent": tangent_fd_test(t, 1000, run["seed"]),
        "separation": separation_test(t, run["n_pairs"], run["seed"], run["max_n"], run["k0"]),
    }
    return res, {}, all(v["pass"] for v in res.values())


def cmd_correlation(cfg, out):
    from .simulate import pair_correlations
    from .statistics import decay_envelope_check
    t = cfg.table_config()
    run = cfg.run
    obs = cfg.observable_spec(t)
    est = pair_correlations(obs, cfg.sequence_model(), t, run["max_lag"], run["n_mc"], run["seed"])
    d = obs.d
    rows = [(n, i, j, est.correlation_[n, i, j], est.standard_error_[n, i, j])
            for n in range(run["max_lag"] + 1) for i in range(d) for j in range(d)]
    checks = [decay_envelope_check(est.correlation_[:, i, i], est.standard_error_[:, i, i])
              for i in range(d)]
    files = {"correlation.csv": (["lag", "i", "j", "estimate", "se"], rows)}
    return {"decay": checks}, files, all(c["pass"] for c in checks)


def cmd_gouezel(cfg, out):
    from .simulate import gouezel_profile
    from .statistics import floor_decay_check
    t = cfg.table_config()
    run = cfg.run
    obs = cfg.observable_spec(t)
    est = gouezel_profile(run["block_boundaries"], run["t_vectors"], cfg.sequence_model(), t, obs,
                          run["max_gap"], run["split"], run["n_mc"], run["seed"])
    rows = list(zip(est.gaps_, est.magnitude_, est.standard_error_))
    chk = floor_decay_check(est.magnitude_, est.standard_error_)
    return {"shape": chk}, {"gouezel.csv": (["k", "magnitude", "se"], rows)}, chk["pass"]


def _sigma2(cfg, t, obs, k=None):
    from .simulate import estimate_sigma2
    run = cfg.run
    return estimate_sigma2(obs, cfg.sequence_model(), run["m_max"], k or run["k"], run["n_mc"],
                           run["seed"], t)


def cmd_covariance(cfg, out):
    from .simulate import empirical_covariance
    from .statistics import compare_covariances, positive_definiteness_report
    t = cfg.table_config()
    run = cfg.run
    obs = cfg.observable_spec(t)
    est = _sigma2(cfg, t, obs)
    bc, _ = empirical_covariance(obs, cfg.sequence_model(), t, run["n_sum"], run["replicas"],
                                 run["seed"] + 1)
    cmp_ = compare_covariances(est.sigma2, est.standard_errors, bc.scaled_[0], bc.scaled_se_[0])
    pd = positive_definiteness_report(est)
    sym = bool(np.array_equal(est.sigma2, est.sigma2.T))
    rows = [(m, i, j, est.V[m, i, j], est.V_se[m, i, j])
            for m in range(len(est.V)) for i in range(est.d) for j in range(est.d)]
    res = {"sigma2": est.to_dict(), "empirical": {"n": run["n_sum"], "replicas": run["replicas"],
                                                   "cov": bc.scaled_[0], "se": bc.scaled_se_[0]},
           "agreement": cmp_, "positive_definiteness": pd, "symmetric": sym}
    return res, {"vm.csv": (["m", "i", "j", "value", "se"], rows)}, \
        cmp_["pass"] and pd["psd_within_noise"] and sym


def cmd_clt(cfg, out):
    from scipy import stats as st
    from .simulate import empirical_covariance
    from .statistics import clt_diagnostics
    t = cfg.table_config()
    run = cfg.run
    obs = cfg.observable_spec(t)
    est = _sigma2(cfg, t, obs)
    _, X = empirical_covariance(obs, cfg.sequence_model(), t, run["n_sum"], run["replicas"],
                                run["seed"] + 1)
    rep = clt_diagnostics(X, est, alpha=run["alpha"])
    sd = math.sqrt(max(est.sigma2[0, 0], 0.0)) or 1.0
    q = np.sort(X[:, 0] / sd)
    theo = st.norm.ppf((np.arange(1, len(q) + 1) - 0.5) / len(q))
    return {"clt": rep, "sigma2": est.to_dict()}, \
        {"qq.csv": (["theoretical", "empirical"], zip(theo, q))}, rep["pass"]


def cmd_growth(cfg, out):
    from .simulate import birkhoff_sums
    from .statistics import VarianceGrowth
    t = cfg.table_config()
    run = cfg.run
    obs = cfg.observable_spec(t)
    model = cfg.sequence_model()
    est = _sigma2(cfg, t, obs)
    naive = _sigma2(cfg, t, obs, k=1)
    S = birkhoff_sums(t, model, obs, run["n_grid"], run["replicas"], run["seed"] + 1, ell=run["ell"])
    vg = VarianceGrowth(run["n_grid"]).fit(S, sigma2=est)
    vn = VarianceGrowth(run["n_grid"]).fit(S, sigma2=naive)
    rows = list(zip(run["n_grid"], vg.deviation_, vg.deviation_se_, vn.deviation_, vn.deviation_se_))
    sep = vn.deviation_[-1] - vg.deviation_[-1]
    comb = math.hypot(vn.deviation_se_[-1], vg.deviation_se_[-1])
    z = sep / comb if comb else math.inf
    res = {"sigma2": est.to_dict(), "naive_sigma2": naive.to_dict(), "fit": vg.fit_,
           "naive_fit": vn.fit_,
           "separation_at_max_n": {"difference": sep, "combined_se": comb,
                                   "z": z}}
    return res, {"growth.csv": (["n", "deviation", "se", "naive_deviation", "naive_se"], rows)}, \
        vg.fit_["pass"] and z > 3.0


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rsbilliard", description="Torus billiard with a randomly re-centred disk.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} command")
        sp.add_argument("config", help="INI config file")
        sp.add_argument("-o", "--out", default=None,
                        help=f"output directory (default ${OUT_ENV} or ./rsbilliard_out)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads; 1 is serial and bit-reproducible")
        sp.add_argument("--seed", type=int, default=None, help="override [run] seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"rsbilliard: config error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg.run["seed"] = args.seed
    if args.threads < 1:
        print("rsbilliard: --threads must be >= 1", file=sys.stderr)
        return 1
    out = Path(args.out or os.environ.get(OUT_ENV) or "rsbilliard_out")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"rsbilliard: cannot write to {out}: {exc}", file=sys.stderr)
        return 1
    import numba
    numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    started = time.time()
    try:
        if args.command != "validate":
            rep = validate_table(cfg.table["rbar"], cfg.table["r"], cfg.table["eps"])
            if not rep.passed:
                print(f"rsbilliard: inadmissible table ({', '.join(rep.failed)})", file=sys.stderr)
                return 1
        summary, files, passed = HANDLERS[args.command](cfg, out)
    except (ConfigError, ValueError) as exc:
        print(f"rsbilliard: {exc}", file=sys.stderr)
        return 1
    outputs = []
    for name, (header, rows) in files.items():
        write_csv(out / name, header, rows)
        outputs.append(str(out / name))
    doc = {"command": args.command, "version": __version__,
           "execution": {"threads": args.threads,
                         "mode": "serial" if args.threads == 1 else "parallel"},
           "config": cfg.to_dict(), "results": summary, "pass": bool(passed)}
    result_path = out / f"{args.command}.json"
    result_path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
    outputs.append(str(result_path))
    record = {"command": args.command, "config_path": str(args.config), "version": __version__,
              "seed": cfg.run["seed"], "outputs": outputs, "started": started,
              "finished": time.time(), "table": cfg.table,
              "model": cfg.model, "observable": cfg.observable["kind"]}
    (out / "run_record.json").write_text(json.dumps(_clean(record), indent=2, sort_keys=True) + "\n")
    print(json.dumps({"command": args.command, "pass": bool(passed), "out": str(out)}))
    return 0 if passed else 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
