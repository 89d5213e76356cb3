"""Command-line entry point: simulate | verify | sweep | reduce | smoothness.

Configs are JSON objects with ``"schema": 1``.  Exit codes: 0 success, 1 a check
failed, 2 configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, harness, reduction, verifier
from .chain_analysis import mixing_estimate
from .instances import SMOOTHING, random_deterministic, random_mdp, random_policy, rng_for
from .learners import LearnerConfig
from .mdp_core import CollabError, ConfigError, Mdp, NumericFailure, load_mdp, mdp_from_dict
from .opponents import OpponentSpec, ScheduleExhausted

log = logging.getLogger("collabmdp")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
SCHEMA = 1
SWEEP_AXES = ("T", "gamma", "epsilon", "alpha", "seed")
SWEEP_COLUMNS = ("cell", "T", "gamma", "epsilon", "alpha", "seed", "algorithm", "opponent",
                 "regret", "V_bar", "rho1_hat", "rho2_hat", "weight_bound", "rho1_within_bound")


def setup_logging():
    level = os.environ.get("COLLABMDP_LOG", "error").lower()
    if level not in ("error", "info", "debug"):
        level = "error"
    logging.basicConfig(level=getattr(logging, level.upper()), format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------- config

def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return check_schema(data, str(path))


def check_schema(data, where="config") -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a JSON object")
    if data.get("schema") != SCHEMA:
        raise ConfigError(f"{where}: 'schema' must be {SCHEMA}, got {data.get('schema')!r}")
    return data


def build_mdp(spec, base: Path | None = None) -> Mdp:
    """MDP from {"file": path} | {"inline": {...}} | {"generator": {n_states, n_a1, n_a2, seed, smoothing}}."""
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError("'mdp' must hold exactly one of 'file', 'inline', 'generator'")
    if "file" in spec:
        path = Path(spec["file"])
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ConfigError(f"MDP file not found: {path}")
        return load_mdp(path)
    if "inline" in spec:
        return mdp_from_dict(spec["inline"])
    if "generator" in spec:
        g = spec["generator"]
        try:
            rng = rng_for(int(g.get("seed", 0)), "instances")
            return random_mdp(rng, int(g["n_states"]), int(g["n_a1"]), int(g["n_a2"]),
                              float(g.get("smoothing", SMOOTHING)), bool(g.get("state_only_reward", False)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad MDP generator spec: {exc}") from None
    raise ConfigError(f"unknown MDP source {sorted(spec)}")


def resolve_gamma(value, T: int) -> int:
    """An integer, "auto" for ceil(T^(4/7)), or "T"."""
    if value == "auto":
        return math.ceil(T ** (4.0 / 7.0))
    if value == "T":
        return T
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"gamma must be an integer, 'auto' or 'T', got {value!r}") from None


def _policy(value, rng, n_states, n_actions):
    if value is None:
        return None
    if value == "uniform":
        return np.full((n_states, n_actions), 1.0 / n_actions)
    if value == "random":
        return random_policy(rng, n_states, n_actions)
    if value == "random-deterministic":
        return random_deterministic(rng, n_states, n_actions)
    return np.asarray(value, dtype=float)


def build_opponent(spec: dict, mdp: Mdp, seed: int, alpha=None) -> OpponentSpec:
    """Policies may be explicit arrays or "uniform" / "random" / "random-deterministic" draws
    from the (seed, "opponent") stream, so they do not depend on T or the cell."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("'opponent' must be an object with a 'kind'")
    rng = rng_for(seed, "opponent")
    s, a2 = mdp.n_states, mdp.n_a2
    kw = {"kind": spec["kind"]}
    for key in ("start", "target"):
        kw[key] = _policy(spec.get(key), rng, s, a2)
    if "schedule" in spec:
        sched = spec["schedule"]
        if isinstance(sched, dict):
            sched = [sched.get("draw", "random")] * int(sched.get("length", 1))
        kw["schedule"] = tuple(_policy(p, rng, s, a2) for p in sched)
    for key in ("c", "cap"):
        if key in spec:
            kw[key] = float(spec[key])
    if alpha is not None or "alpha" in spec:
        kw["alpha"] = float(spec["alpha"] if alpha is None else alpha)
    if "segment_length" in spec:
        kw["segment_length"] = int(spec["segment_length"])
    if "learner" in spec:
        kw["learner"] = build_learner(spec["learner"], None)
    return OpponentSpec(**kw)


def build_learner(spec: dict, T: int | None, gamma=None, epsilon=None) -> LearnerConfig:
    if not isinstance(spec, dict):
        raise ConfigError("'learner' must be an object")
    g = spec.get("gamma", "auto") if gamma is None else gamma
    if T is None and g in ("auto", "T"):
        raise ConfigError("symbolic gamma needs a horizon")
    eps = spec.get("epsilon") if epsilon is None else epsilon
    return LearnerConfig(resolve_gamma(g, T) if T is not None else int(g),
                         None if eps is None else float(eps), spec.get("algorithm", "ExpDRBias"))


def _int(cfg, key, default=None) -> int:
    value = cfg.get(key, default)
    if value is None:
        raise ConfigError(f"config needs '{key}'")
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}") from None


# ---------------------------------------------------------------- execution

def evaluate(run_log: harness.EpisodeLog, certify: bool = True):
    """Comparator, regret report, and (when enumeration allows) the smoothness certificate."""
    mdp = run_log.mdp
    cert = opt = None
    mix = None
    candidates = ()
    if certify:
        try:
            mix = mixing_estimate(mdp)
            cert = harness.smoothness_certificate(mdp, extra_pairs=list(zip(run_log.pi1, run_log.pi2)))
            candidates = (cert.anchor_p1,)
            opt = harness.opt_value(mdp, run_log.M)
        except (harness.PreconditionError, harness.DegenerateCertificate, NumericFailure) as exc:
            log.info("no certificate: %s", exc)
            cert = opt = None
    comp = harness.best_fixed_comparator(mdp, run_log.pi2, candidates=candidates)
    rep = harness.regret(run_log, comp, cert if cert is not None and not cert.trivial else None, opt, mix)
    return comp, rep, cert


def run_cell(cell: dict) -> dict:
    """One simulation cell; returns the sweep row plus the episode CSV text."""
    mdp = build_mdp(cell["mdp"], Path(cell["base"]) if cell.get("base") else None)
    T, M, seed = int(cell["T"]), int(cell["M"]), int(cell["seed"])
    learner = build_learner(cell["learner"], T, cell.get("gamma"), cell.get("epsilon"))
    opp = build_opponent(cell["opponent"], mdp, seed, cell.get("alpha"))
    run_log = harness.run(mdp, learner, opp, T, M, seed)
    comp, rep, _ = evaluate(run_log, certify=False)
    gap = mixing_estimate(mdp).gap
    bound = verifier.weight_step_bound(learner.epsilon, gap)
    if learner.algorithm == "ExpRestart":
        inside = (np.arange(T) % learner.gamma) != 0
        rho1_in = float(run_log.rho1_step[inside].max()) if inside.any() else 0.0
        within = rho1_in <= bound + verifier.SLACK_TOL
    else:
        within = float(run_log.rho1_step.max()) <= min(2.0, bound + 2.0 / learner.gamma) + verifier.SLACK_TOL
    row = {
        "cell": cell["key"], "T": T, "gamma": learner.gamma, "epsilon": learner.epsilon,
        "alpha": opp.alpha if opp.kind == "drift" else "", "seed": seed, "algorithm": learner.algorithm,
        "opponent": opp.kind, "regret": rep.regret, "V_bar": rep.V_bar,
        "rho1_hat": float(run_log.rho1_step.max()), "rho2_hat": float(run_log.rho2_step.max()),
        "weight_bound": bound, "rho1_within_bound": bool(within),
    }
    return {"row": row, "csv": harness.log_to_csv(run_log, comp)}


def sweep_cells(cfg: dict, base: Path | None = None) -> list[dict]:
    axes = cfg.get("sweep")
    if not isinstance(axes, dict) or not axes:
        raise ConfigError("sweep mode needs a nonempty 'sweep' object")
    unknown = set(axes) - set(SWEEP_AXES)
    if unknown:
        raise ConfigError(f"unknown sweep axes {sorted(unknown)}; allowed {SWEEP_AXES}")
    for k, v in axes.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"sweep axis '{k}' must be a nonempty list")
    grid = {
        "T": axes.get("T", [cfg.get("T")]),
        "gamma": axes.get("gamma", [None]),
        "epsilon": axes.get("epsilon", [None]),
        "alpha": axes.get("alpha", [None]),
        "seed": axes.get("seed", [cfg.get("seed", 0)]),
    }
    cells = []
    for i, (T, g, e, a, s) in enumerate(itertools.product(*(grid[k] for k in SWEEP_AXES))):
        if T is None:
            raise ConfigError("config needs 'T' or a T sweep axis")
        key = f"c{i:04d}_T{T}_g{g if g is not None else 'cfg'}_e{e if e is not None else 'cfg'}" \
              f"_a{a if a is not None else 'cfg'}_s{s}"
        cells.append({"key": key, "mdp": cfg.get("mdp"), "learner": cfg.get("learner", {}),
                      "opponent": cfg.get("opponent"), "T": T, "M": cfg.get("M", 100), "seed": s,
                      "gamma": g, "epsilon": e, "alpha": a, "base": str(base) if base else None})
    for c in cells:
        T = int(c["T"])
        g = resolve_gamma(c["gamma"] if c["gamma"] is not None else c["learner"].get("gamma", "auto"), T)
        if g > T:
            raise ConfigError(f"cell {c['key']}: gamma {g} exceeds T {T}")
    return cells


def run_sweep(cfg: dict, jobs: int = 1, base: Path | None = None) -> list[dict]:
    cells = sweep_cells(cfg, base)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_cell, cells))
    return [run_cell(c) for c in cells]


def fit_rates(rows) -> list[dict]:
    """Seed-averaged regret per T, then the log-log slope, per (algorithm, opponent, alpha) group."""
    groups = {}
    for r in rows:
        groups.setdefault((r["algorithm"], r["opponent"], r["alpha"]), {}).setdefault(r["T"], []).append(r["regret"])
    out = []
    for (alg, opp, alpha), by_t in sorted(groups.items(), key=lambda kv: tuple(map(str, kv[0]))):
        ts = sorted(by_t)
        means = [float(np.mean(by_t[t])) for t in ts]
        entry = {"algorithm": alg, "opponent": opp, "alpha": alpha, "T": ts, "mean_regret": means}
        if len(ts) >= 2:
            a = math.inf if opp == "fixed" else float(alpha) if alpha != "" else None
            if a is not None:
                chk = verifier.check_rate(ts, means, a)
                entry.update({"slope": chk.lhs, "threshold": chk.rhs, "pass": chk.passed})
            else:
                entry["slope"] = verifier.fitted_slope(ts, means) if min(means) > 0 else None
        out.append(entry)
    return out


# ---------------------------------------------------------------- output

def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj) -> str:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        raise TypeError(f"not JSON serializable: {type(o).__name__}")

    return json.dumps(obj, indent=2, default=default, allow_nan=True) + "\n"


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in SWEEP_COLUMNS])
    return buf.getvalue()


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: dict, out: Path, base: Path | None = None) -> int:
    start = time.perf_counter()
    mdp = build_mdp(cfg.get("mdp"), base)
    T, M, seed = _int(cfg, "T"), _int(cfg, "M", 100), _int(cfg, "seed", 0)
    learner = build_learner(cfg.get("learner", {}), T)
    opp = build_opponent(cfg.get("opponent"), mdp, seed)
    run_log = harness.run(mdp, learner, opp, T, M, seed)
    comp, rep, cert = evaluate(run_log, certify=cfg.get("certify", True))
    checks = []
    if cfg.get("verify_run", True):
        try:
            mix = mixing_estimate(mdp)
            checks = verifier.run_checks(run_log, mix, rng_for(seed, "verifier"), with_value_bound=cert is not None)
        except (harness.PreconditionError, NumericFailure) as exc:
            log.info("run checks skipped: %s", exc)
    write_atomic(out / "episodes.csv", harness.log_to_csv(run_log, comp))
    summary = {
        "config": cfg,
        "regret": rep.to_dict(),
        "certificate": cert.to_dict() if cert is not None else None,
        "verifier": {"checks": len(checks), "failed": sum(not c.passed for c in checks)},
        "wall_clock_s": time.perf_counter() - start,
        "version": __version__,
    }
    write_atomic(out / "summary.json", _json(summary))
    print(f"regret {rep.regret:.6g}  V_bar {rep.V_bar:.6g}  checks {len(checks)} "
          f"failed {summary['verifier']['failed']}  -> {out}")
    return EXIT_OK


def cmd_verify(cfg: dict, out: Path, base: Path | None = None) -> int:
    v = cfg.get("verify", {})
    instances = None
    if "instances" in v:
        if not v["instances"]:
            raise ConfigError("'verify.instances' is empty")
        instances = [build_mdp(spec, base) for spec in v["instances"]]
    old_tol = verifier.SLACK_TOL
    if "slack_tol" in v:  # test hook: a negative tolerance demands positive slack
        verifier.SLACK_TOL = float(v["slack_tol"])
    try:
        checks = verifier.run_suite(seed=_int(cfg, "seed", 0), n_instances=_int(v, "n_instances", 50),
                                    T=_int(v, "T", 500), gamma=_int(v, "gamma", 32), M=_int(v, "M", 100),
                                    n_pairs=_int(v, "n_pairs", 10), instances=instances)
        records = [c.to_dict() for c in checks]
        failed = sum(not r["pass"] for r in records)
    finally:
        verifier.SLACK_TOL = old_tol
    write_atomic(out / "checks.json", _json(records))
    print(verifier.format_summary(checks))
    print(f"{len(records)} checks, {failed} failed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_sweep(cfg: dict, out: Path, jobs: int, base: Path | None = None) -> int:
    results = run_sweep(cfg, jobs, base)
    for res in results:
        write_atomic(out / "cells" / f"{res['row']['cell']}.csv", res["csv"])
    rows = [r["row"] for r in results]
    write_atomic(out / "sweep.csv", rows_to_csv(rows))
    rates = fit_rates(rows)
    write_atomic(out / "rates.json", _json(rates))
    for r in rates:
        if "slope" in r:
            print(f"{r['algorithm']:<11} {r['opponent']:<18} alpha={r['alpha']!s:<5} slope={r['slope']}"
                  + (f" threshold={r['threshold']:.4g} {'PASS' if r['pass'] else 'FAIL'}" if "pass" in r else ""))
    failed = any(r.get("pass") is False for r in rates) or not all(r["rho1_within_bound"] for r in rows)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_reduce(cfg: dict, out: Path, base: Path | None = None) -> int:
    r = cfg.get("reduce", {})
    if "graph" not in r:
        raise ConfigError("'reduce.graph' (graph-rounds JSON path) is required")
    path = Path(r["graph"])
    if base is not None and not path.is_absolute():
        path = base / path
    inst = reduction.reduce_rounds(reduction.load_rounds(path), float(r.get("rho2", 0.1)))
    rep = reduction.check_correspondence(inst)
    steps = inst.schedule_steps()
    expected = reduction.constructed_steps(inst)
    write_atomic(out / "mdp.json", _json({"schema": 1, **inst.mdp.to_dict()}))
    write_atomic(out / "schedule.json", _json(reduction.schedule_to_dict(inst)))
    write_atomic(out / "correspondence.json", _json({**rep.to_dict(), "steps": steps, "constructed_steps": expected}))
    for rd in rep.rounds:
        print(f"round {rd['round']}: ratio {np.mean(rd['ratios']) if rd['ratios'] else float('nan'):.6g}"
              f"  spread {rd['ratio_spread']:.3g}  max eta at V=0 {rd['max_eta_at_zero_V']:.3g}")
    ok = rep.max_spread <= 1e-6 and np.allclose(steps, expected, atol=1e-12)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_smoothness(cfg: dict, out: Path, base: Path | None = None) -> int:
    mdp = build_mdp(cfg.get("mdp"), base)
    sm = cfg.get("smoothness", {})
    cert = harness.smoothness_certificate(mdp, max_pairs=_int(sm, "max_pairs", harness.GRID_CAP))
    data = cert.to_dict()
    if harness.state_only_reward(mdp) and "eta_hat" in sm:
        k = harness.kappa_factors(mdp, float(sm["eta_hat"]))
        data["kappa"] = vars(k)
        if "p1" in sm and "p2" in sm:
            try:
                k.lam_max, k.mu_min = harness.kappa_bounds(k.kappa1, k.kappa2, float(sm["p1"]), float(sm["p2"]))
            except harness.PreconditionError as exc:
                data["kappa"]["bounds_unavailable"] = str(exc)
    write_atomic(out / "certificate.json", _json(data))
    print(f"lambda {cert.lam:.6g}  mu {cert.mu:.6g}  ratio {cert.ratio:.6g}  pairs {cert.n_pairs}"
          + ("  (trivial)" if cert.trivial else ""))
    return EXIT_OK


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="collabmdp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "verify", "sweep", "reduce", "smoothness"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=Path("out"))
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
    return p


def main(argv=None) -> int:
    setup_logging()
    args = parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        base = args.config.resolve().parent
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, base)
        if args.command == "verify":
            return cmd_verify(cfg, args.out, base)
        if args.command == "sweep":
            if args.jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            return cmd_sweep(cfg, args.out, args.jobs, base)
        if args.command == "reduce":
            return cmd_reduce(cfg, args.out, base)
        return cmd_smoothness(cfg, args.out, base)
    except (ConfigError, harness.PreconditionError, ScheduleExhausted) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CollabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
