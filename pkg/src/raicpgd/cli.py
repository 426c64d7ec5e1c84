"""Command-line front end.

Subcommands: gen, recover, certify-raic, sweep, bounds, report-data.
Configs are JSON with a mandatory "schema_version" field; unknown keys are
rejected.  Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from raicpgd import __version__
from raicpgd.constraints import ConstraintSet
from raicpgd.core import derive_seed, gaussian_ensemble
from raicpgd.experiments import (
    CorruptionSpec, ExperimentSpec, preset_spec,
    records_to_csv, run_sweep, CSV_COLUMNS,
)
from raicpgd.links import Link, apply_link_batch, compute_mu, UnsupportedLinkError
from raicpgd.raic import certify_raic, sample_sparse_sphere, TheoryBoundParams, theory_bound
from raicpgd.solvers import ContractionError, DivergenceError, GradientOp, SolverConfig, pgd_run

log = logging.getLogger("raicpgd")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    pass


def _load_config(path: str, overrides):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: line {e.lineno} column {e.colno}: {e.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if "schema_version" not in cfg:
        raise ConfigError('config is missing the mandatory "schema_version" field')
    for kv in overrides or ():
        if "=" not in kv:
            raise ConfigError(f"--set expects KEY=VALUE, got {kv!r}")
        key, _, raw = kv.partition("=")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return cfg


def _check_keys(cfg: dict, allowed: set, where: str):
    extra = set(cfg) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _provenance(cfg: dict, overrides) -> list:
    lines = [f"tool raicpgd {__version__}",
             f"config_hash {_config_hash(cfg)}"]
    if "master_seed" in cfg:
        lines.append(f"master_seed {cfg['master_seed']}")
    for kv in overrides or ():
        lines.append(f"override {kv}")
    return lines


def _link_from(cfg) -> Link:
    if isinstance(cfg, str):
        return Link(cfg)
    _check_keys(cfg, {"variant", "param"}, "link")
    return Link(cfg["variant"], cfg.get("param"))


def _cset_from(cfg) -> ConstraintSet:
    _check_keys(cfg, {"variant", "param"}, "set")
    return ConstraintSet(cfg["variant"], cfg["param"])


def _master_seed(cfg: dict) -> int:
    env = os.environ.get("RAIC_SEED")
    if env is not None:
        return int(env)
    return int(cfg.get("master_seed", 0))


def _spec_from(cfg: dict) -> ExperimentSpec:
    if "preset" in cfg:
        _check_keys(cfg, {"schema_version", "preset", "master_seed", "experiment_id",
                          "trials", "signals_per_trial", "grid"}, "sweep config")
        over = {}
        for key in ("experiment_id", "trials", "signals_per_trial"):
            if key in cfg:
                over[key] = cfg[key]
        if "grid" in cfg:
            over["grid"] = tuple(tuple(g) for g in cfg["grid"])
        over["master_seed"] = _master_seed(cfg)
        return preset_spec(cfg["preset"], **over)
    allowed = {"schema_version", "experiment_id", "setting", "link", "set",
               "solver", "gradient", "grid", "trials", "signals_per_trial",
               "signal_policy", "search_restarts", "search_steps",
               "corruption", "master_seed"}
    _check_keys(cfg, allowed, "sweep config")
    sol = cfg.get("solver", {})
    _check_keys(sol, {"eta", "max_iters", "normalize", "target_norm", "stop_tol"}, "solver")
    grad = cfg.get("gradient", {"variant": "scaled-l2"})
    _check_keys(grad, {"variant", "mu"}, "gradient")
    cor = cfg.get("corruption", {"variant": "none"})
    _check_keys(cor, {"variant", "param", "heuristic"}, "corruption")
    try:
        return ExperimentSpec(
            experiment_id=cfg["experiment_id"],
            setting=cfg.get("setting", "a"),
            link=_link_from(cfg["link"]),
            cset=_cset_from(cfg["set"]),
            solver=SolverConfig(
                eta=sol.get("eta"), max_iters=int(sol.get("max_iters", 60)),
                normalize=bool(sol.get("normalize", False)),
                target_norm=float(sol.get("target_norm", 1.0)),
                stop_tol=float(sol.get("stop_tol", 0.0)),
            ),
            op=GradientOp(grad.get("variant", "scaled-l2"), grad.get("mu")),
            grid=tuple(tuple(g) for g in cfg["grid"]),
            trials=int(cfg.get("trials", 1)),
            signals_per_trial=int(cfg.get("signals_per_trial", 1)),
            signal_policy=cfg.get("signal_policy", "uniform"),
            search_restarts=int(cfg.get("search_restarts", 0)),
            search_steps=int(cfg.get("search_steps", 0)),
            corruption=CorruptionSpec(cor.get("variant", "none"),
                                      float(cor.get("param", 0.0)),
                                      cor.get("heuristic", "random")),
            master_seed=_master_seed(cfg),
        )
    except KeyError as e:
        raise ConfigError(f"missing required config key {e.args[0]!r}")
    except ValueError as e:
        raise ConfigError(str(e))


def _outdir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(args) -> int:
    cfg = _load_config(args.config, args.set)
    _check_keys(cfg, {"schema_version", "n", "m", "k", "link", "master_seed"}, "gen config")
    seed = _master_seed(cfg)
    link = _link_from(cfg["link"])
    n, m, k = int(cfg["n"]), int(cfg["m"]), int(cfg.get("k", 1))
    from raicpgd.core import rng_from_seed
    A = gaussian_ensemble(m, n, derive_seed(seed, "ensemble"))
    x = sample_sparse_sphere(n, k, rng_from_seed(derive_seed(seed, "signal")))
    y = apply_link_batch(link, A.matrix @ x,
                         rng_seed=derive_seed(seed, "obs") if link.is_random else None)
    out = _outdir(args)
    np.savez(out / "instance.npz", A=A.matrix, x=x, y=y)
    meta = {"schema_version": 1, "tool": f"raicpgd {__version__}",
            "config_hash": _config_hash(cfg), "master_seed": seed,
            "n": n, "m": m, "k": k, "link": link.variant}
    (out / "instance.json").write_text(json.dumps(meta, indent=2) + "\n")
    log.info("wrote %s", out / "instance.npz")
    return EXIT_OK


def cmd_recover(args) -> int:
    cfg = _load_config(args.config, args.set)
    _check_keys(cfg, {"schema_version", "instance", "set", "solver", "gradient",
                      "link", "master_seed"}, "recover config")
    data = np.load(Path(cfg["instance"]))
    A_mat, x, y = data["A"], data["x"], data["y"]
    m, n = A_mat.shape
    from raicpgd.core import SensingEnsemble
    A = SensingEnsemble(rows=m, cols=n, matrix=A_mat, seed=-1)
    cset = _cset_from(cfg["set"])
    sol = cfg.get("solver", {})
    _check_keys(sol, {"eta", "max_iters", "normalize", "target_norm", "stop_tol"}, "solver")
    grad = cfg.get("gradient", {"variant": "scaled-l2"})
    _check_keys(grad, {"variant", "mu"}, "gradient")
    mu = grad.get("mu")
    if mu is None and grad.get("variant", "scaled-l2") == "scaled-l2":
        mu = compute_mu(_link_from(cfg["link"])).mu
    op = GradientOp(grad.get("variant", "scaled-l2"), mu)
    config = SolverConfig(eta=sol.get("eta"), max_iters=int(sol.get("max_iters", 60)),
                          normalize=bool(sol.get("normalize", False)),
                          target_norm=float(sol.get("target_norm", 1.0)),
                          stop_tol=float(sol.get("stop_tol", 0.0)))
    traj = pgd_run(config, A, y, cset, op, truth=x, keep_iterates=False)
    print(f"iters={traj.iters_run} final_error={traj.final_error:.9g}")
    for t, e in enumerate(traj.errors):
        print(f"  t={t} error={e:.9g}")
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = _load_config(args.config, args.set)
    _check_keys(cfg, {"schema_version", "n", "m", "k", "link", "set", "sampler",
                      "n_pairs", "eta", "phi", "master_seed"}, "certify config")
    seed = _master_seed(cfg)
    link = _link_from(cfg["link"])
    cset = _cset_from(cfg["set"])
    n, m = int(cfg["n"]), int(cfg["m"])
    A = gaussian_ensemble(m, n, derive_seed(seed, "ensemble"))
    mu = compute_mu(link).mu
    eta = cfg.get("eta")
    if eta is None:
        eta = 1.0 / mu**2
    cert = certify_raic(A, link, cset, sampler=cfg.get("sampler", "random-random"),
                        n_pairs=int(cfg.get("n_pairs", 50)), eta=float(eta), mu=mu,
                        phi=cfg.get("phi"), seed=seed,
                        signal_k=int(cfg["k"]) if "k" in cfg else None)
    out = _outdir(args)
    path = out / "raic_certificate.json"
    blob = json.loads(cert.to_json())
    blob["tool"] = f"raicpgd {__version__}"
    blob["config_hash"] = _config_hash(cfg)
    path.write_text(json.dumps(blob, indent=2) + "\n")
    print(f"mu1_hat={cert.mu1_hat:.9g} mu2_hat={cert.mu2_hat:.9g} pairs={cert.n_pairs}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config, args.set)
    spec = _spec_from(cfg)
    records = run_sweep(spec, threads=args.threads)
    if all(r.diverged for r in records):
        log.error("every trial diverged")
        return EXIT_NUMERIC
    out = _outdir(args)
    text = records_to_csv(records, header_comments=_provenance(cfg, args.set))
    path = out / f"{spec.experiment_id}.csv"
    path.write_text(text)
    log.info("wrote %s (%d records)", path, len(records))
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = _load_config(args.config, args.set)
    allowed = {"schema_version", "mode", "grid", "master_seed"}
    _check_keys(cfg, allowed, "bounds config")
    mode = cfg.get("mode", "cone-xi")
    rows = []
    for point in cfg["grid"]:
        _check_keys(point, {"m", "n", "k", "eps", "zeta", "phi1", "phi2", "phi3",
                            "phi4", "phi5", "mu", "width_K1", "width_X_eps",
                            "entropy", "phi"}, "bounds grid point")
        try:
            p = TheoryBoundParams(
                m=int(point["m"]), n=int(point["n"]), k=int(point["k"]),
                eps=float(point["eps"]), zeta=float(point["zeta"]),
                phi1=float(point.get("phi1", 0)), phi2=float(point["phi2"]),
                phi3=float(point.get("phi3", 0)), phi4=float(point.get("phi4", 0)),
                phi5=float(point["phi5"]), mu=float(point.get("mu", 1)),
                width_K1=float(point["width_K1"]),
                width_X_eps=float(point.get("width_X_eps", 0)),
                entropy=float(point["entropy"]),
                phi=point.get("phi"),
            )
            bar, val = theory_bound(p, mode)
        except ValueError as e:
            log.error("bound evaluation failed: %s", e)
            return EXIT_NUMERIC
        rows.append((p.m, p.n, p.k, bar, val))
    out = _outdir(args)
    path = out / "bounds.csv"
    with path.open("w") as fh:
        for line in _provenance(cfg, args.set):
            fh.write(f"# {line}\n")
        fh.write("m,n,k,bar,bound\n")
        for r in rows:
            fh.write(f"{r[0]},{r[1]},{r[2]},{r[3]:.9g},{r[4]:.9g}\n")
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_report_data(args) -> int:
    cfg = _load_config(args.config, args.set)
    _check_keys(cfg, {"schema_version", "sweeps", "overlay", "master_seed"}, "report config")
    rows = []
    for sweep_path in cfg["sweeps"]:
        with open(sweep_path, newline="") as fh:
            plain = [ln for ln in fh if not ln.startswith("#")]
        rdr = csv.DictReader(io.StringIO("".join(plain)))
        if rdr.fieldnames != CSV_COLUMNS:
            raise ConfigError(f"{sweep_path}: unexpected CSV header")
        for row in rdr:
            rows.append(row)
    overlay_rows = []
    if cfg.get("overlay"):
        with open(cfg["overlay"], newline="") as fh:
            plain = [ln for ln in fh if not ln.startswith("#")]
        overlay_rows = list(csv.DictReader(io.StringIO("".join(plain))))
    # per (experiment_id, m): median of final errors, plus optional bound overlay
    groups = {}
    for row in rows:
        if row["diverged"] == "1":
            continue
        key = (row["experiment_id"], int(row["m"]))
        groups.setdefault(key, []).append(float(row["final_error"]))
    bound_by_m = {int(r["m"]): float(r["bound"]) for r in overlay_rows}
    out = _outdir(args)
    path = out / "report.csv"
    with path.open("w") as fh:
        for line in _provenance(cfg, args.set):
            fh.write(f"# {line}\n")
        fh.write("experiment_id,m,median_error,n_trials,theory_bound\n")
        for (eid, m) in sorted(groups):
            vals = sorted(groups[(eid, m)])
            med = float(np.median(vals))
            tb = bound_by_m.get(m, "")
            tb_s = f"{tb:.9g}" if tb != "" else ""
            fh.write(f"{eid},{m},{med:.9g},{len(vals)},{tb_s}\n")
    log.info("wrote %s", path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="raicpgd")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("gen", cmd_gen), ("recover", cmd_recover),
                     ("certify-raic", cmd_certify), ("sweep", cmd_sweep),
                     ("bounds", cmd_bounds), ("report-data", cmd_report_data)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--threads", type=int, default=0)
        p.add_argument("--log", choices=("error", "info", "debug"), default="info")
        p.set_defaults(fn=fn)
    return ap


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log.upper()),
                        format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as e:
        log.error("%s", e)
        return EXIT_CONFIG
    except (DivergenceError, ContractionError, UnsupportedLinkError,
            FloatingPointError) as e:
        log.error("numerical failure: %s", e)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run_cli())
