"""Command-line entry point.

    robust-hedge price|greeks   [--payoff call:100] [--S 100 --R 0 --Sigma 0.04]
    robust-hedge simulate       --config run.yaml
    robust-hedge converge       --config run.yaml
    robust-hedge compare-leland --config run.yaml

Global flags: --config, --seed (overrides run.master_seed), --threads
(speed only), --out (overrides output.directory).  Exit codes: 0 success,
1 invalid input, 2 completed with resolution alarms, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .config import ExperimentConfig, build_payoff, parse_config, payoff_from_shorthand, validate
from .engine import run_continuous, run_hitting_time, run_leland
from .errors import ConfigError, GridResolutionWarning, HedgeError, NumericFailure
from .lab import compare_leland, convergence_study, map_paths
from .models import path_seed, refine_grid, refine_seed, simulate_path, write_path_csv
from .pricing import greeks, pde_residuals

log = logging.getLogger("robust_hedge")

EXIT_OK, EXIT_INPUT, EXIT_ALARM, EXIT_NUMERIC = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# serialization helpers
# ---------------------------------------------------------------------------
def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


class _Run:
    """Output directory, format selection and the sidecar metadata."""

    def __init__(self, cfg: ExperimentConfig, command: str, threads: int):
        out = cfg.section("output")
        self.dir = out["directory"]
        self.formats = set(out["formats"])
        self.command = command
        self.threads = threads
        self.started = time.time()
        os.makedirs(self.dir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.dir, name)

    def csv(self, name, header, rows):
        if "csv" in self.formats:
            _write_csv(self.path(name), header, rows)

    def json(self, name, obj):
        if "json" in self.formats:
            _dump_json(obj, self.path(name))

    def finish(self, status):
        meta = {"command": self.command, "version": __version__, "threads": self.threads,
                "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(self.started)),
                "elapsed_seconds": round(time.time() - self.started, 3), "exit_status": status}
        _dump_json(meta, self.path(f"{self.command}.meta.json"))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def _pricing_payload(cfg: ExperimentConfig):
    pr = cfg.section("pricing")
    payoff = cfg.payoff()
    g = greeks(payoff, pr["S"], pr["R"], pr["Sigma"], method=pr["method"])
    out = {"inputs": {"S": pr["S"], "R": pr["R"], "Sigma": pr["Sigma"], "method": pr["method"]},
           "payoff": payoff.describe(), **g.to_dict()}
    if pr["Sigma"] > 0:
        out["residuals"] = pde_residuals(payoff, pr["S"], pr["R"], pr["Sigma"], method=pr["method"]).to_dict()
    else:
        out["residuals"] = None
    return out


def cmd_price(cfg, args):
    json.dump(_clean(_pricing_payload(cfg)), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig, args):
    run = _Run(cfg, "simulate", args.threads)
    model, payoff, strat = cfg.model_spec(), cfg.payoff(), cfg.strategy()
    g, r = cfg.section("grid"), cfg.section("run")
    seed0 = r["master_seed"]
    dump = cfg.section("output")["dump_paths"]
    if dump:
        os.makedirs(run.path("paths"), exist_ok=True)

    def one(i):
        seed = path_seed(seed0, i)
        path = simulate_path(model, g["horizon"], g["steps"], seed)
        if g["refine_factor"] and g["refine_factor"] > 1:
            path = refine_grid(path, g["refine_factor"], refine_seed(seed0, i))
        if dump:
            write_path_csv(path, run.path(f"paths/path_{i:06d}.csv"))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", GridResolutionWarning)
            if strat.kind == "continuous":
                o = run_continuous(path, payoff, strat)
            elif strat.kind == "leland":
                o = run_leland(path, payoff, model.sigma, strat.kappa, strat.n, r["maturity"])
            else:
                o = run_hitting_time(path, payoff, strat)
        return (i, seed, int(o.n_rebalances[-1]), o.terminal_shortfall, float(o.z_path[-1]),
                o.total_cost_paid, o.initial_price_charged, bool(o.resolution_alarm))

    rows = map_paths(one, r["paths"], args.threads)
    header = ["path", "seed", "n_rebalances", "terminal_shortfall", "z_at_T", "total_cost",
              "initial_price", "resolution_alarm"]
    run.csv("simulate.csv", header, rows)
    arr = np.array([row[2:7] for row in rows], dtype=float)
    alarms = sum(row[7] for row in rows)
    agg = {name: {"mean": float(np.mean(arr[:, j])),
                  "std": float(np.std(arr[:, j], ddof=1)) if len(rows) > 1 else None}
           for j, name in enumerate(header[2:7])}
    summary = {"config": cfg.resolved, "aggregate": agg, "paths": len(rows), "resolution_alarms": int(alarms),
               "flags": (["grid_resolution_alarm"] if alarms else [])}
    run.json("simulate.json", summary)
    status = EXIT_ALARM if alarms else EXIT_OK
    run.finish(status)
    _report(summary["aggregate"], status)
    return status


def cmd_converge(cfg: ExperimentConfig, args):
    run = _Run(cfg, "converge", args.threads)
    g, r = cfg.section("grid"), cfg.section("run")
    rep = convergence_study(cfg.model_spec(), cfg.payoff(), cfg.strategy(kind="hitting_time"),
                            r["kappa_ladder"], r["paths"], cfg.checkpoints, r["master_seed"], g["steps"],
                            threads=args.threads, horizon=g["horizon"])
    pp = rep.per_path
    seeds = [path_seed(r["master_seed"], i) for i in range(r["paths"])]
    cps = sorted(cfg.checkpoints)
    for j, kap in enumerate(r["kappa_ladder"]):
        rows = []
        for i in range(r["paths"]):
            for c, t in enumerate(cps):
                rows.append((i, seeds[i], t, pp["z"][i, j, c], pp["q"][i, c], int(pp["n"][i, j, c]),
                             pp["s_tilde"][i, c], pp["count_limit"][i, c], bool(pp["alarm"][i, j])))
        run.csv(f"converge_kappa_{kap:g}.csv",
                ["path", "seed", "t", "z", "q", "n_rebalances", "s_tilde", "count_limit", "resolution_alarm"],
                rows)
    summary = dict(rep.to_dict(), config=cfg.resolved, study=rep.config)
    run.json("converge.json", summary)
    alarms = int(pp["alarm"].any(axis=1).sum())
    status = EXIT_ALARM if alarms else EXIT_OK
    run.finish(status)
    _report({f"kappa={c.kappa:g} t={c.t:g}": {"var_ratio": c.var_ratio, "mse_ratio": c.mse_ratio,
                                               "kappa2_n": c.kappa2_n_mean} for c in rep.cells}, status)
    return status


def cmd_compare_leland(cfg: ExperimentConfig, args):
    m, g, r = cfg.section("model"), cfg.section("grid"), cfg.section("run")
    if m["kind"] != "black_scholes" or m["rate"] != 0:
        raise ConfigError("model: compare-leland needs a black_scholes model with rate 0")
    if r["maturity"] != 1.0:
        raise ConfigError("run.maturity: compare-leland uses T = 1")
    run = _Run(cfg, "compare-leland", args.threads)
    rep = compare_leland(m["sigma"], r["kappa0"], r["n_ladder"], cfg.payoff(), r["paths"], r["master_seed"],
                         g["steps"], checkpoint=g["horizon"], spot=m["spot"],
                         bridge_depth=cfg.section("strategy")["bridge_depth"], threads=args.threads)
    for n, pp in rep.per_path.items():
        rows = [(i, path_seed(r["master_seed"], i), pp["z_hitting"][i], pp["z_leland"][i], int(pp["n_hitting"][i]),
                 pp["gamma_integral"][i]) for i in range(r["paths"])]
        run.csv(f"compare_leland_n{n}.csv",
                ["path", "seed", "z_hitting", "z_leland", "n_rebalances_hitting", "gamma_integral"], rows)
    run.json("compare_leland.json", dict(rep.to_dict(), config=cfg.resolved, study=rep.config))
    run.finish(EXIT_OK)
    _report({f"n={row['n']}": {k: row[k] for k in ("mse_ratio", "target_ratio", "count_ratio")}
             for row in rep.rows}, EXIT_OK)
    return EXIT_OK


def _report(obj, status):
    log.info("status %d: %s", status, json.dumps(_clean(obj), sort_keys=True))


COMMANDS = {"price": cmd_price, "greeks": cmd_price, "simulate": cmd_simulate, "converge": cmd_converge,
            "compare-leland": cmd_compare_leland}


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides run.master_seed)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (speed only)")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="robust-hedge", description=__doc__.splitlines()[0] if __doc__ else None)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("price", "greeks"):
        sp = sub.add_parser(name, parents=[common], help=f"{name} of a payoff at (S, R, Sigma) as JSON")
        sp.add_argument("--payoff", help="call:K, put:K, smooth:EXPR or an inline mapping")
        sp.add_argument("--S", type=float)
        sp.add_argument("--R", type=float)
        sp.add_argument("--Sigma", type=float)
        sp.add_argument("--method", choices=["auto", "closed", "quadrature"])
    for name, text in (("simulate", "run one strategy over many paths"),
                       ("converge", "hitting-time convergence study over a kappa ladder"),
                       ("compare-leland", "Leland vs hitting-time comparison")):
        sub.add_parser(name, parents=[common], help=text)
    return ap


def _load(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        import yaml
        try:
            with open(args.config) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config} ({exc.strerror})") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config: not valid YAML/JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a mapping")
    raw = dict(raw)

    def put(section, key, value):
        if value is not None:
            raw[section] = dict(raw.get(section) or {})
            raw[section][key] = value

    put("run", "master_seed", args.seed)
    put("output", "directory", args.out)
    if args.command in ("price", "greeks"):
        if args.payoff:
            raw["payoff"] = payoff_from_shorthand(args.payoff)
        put("pricing", "S", args.S)
        put("pricing", "R", args.R)
        put("pricing", "Sigma", args.Sigma)
        put("pricing", "method", args.method)
    return validate(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_INPUT
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HedgeError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
