"""Experiment configuration: strict schema, defaults, validation.

Configs are YAML (JSON is valid YAML) with these sections; every key is
optional and unknown keys are errors::

    model:    kind (black_scholes | time_dependent_vol | stoch_vol), spot, rate,
              sigma, sigma_knots, v0, mean_reversion, long_run_var, vol_of_vol, correlation
    payoff:   kind (call | put | piecewise_linear | smooth), strike, knots, weights,
              intercept, slope, expr, convexity
    strategy: kind (continuous | hitting_time | leland), sigma_hat_sq, alpha, kappa, n,
              detection, bridge_depth, charge_switch_cost, min_steps_per_rebalance
    grid:     steps, horizon, refine_factor
    run:      paths, master_seed, kappa_ladder, n_ladder, checkpoints, kappa0, maturity
    pricing:  S, R, Sigma, method
    output:   directory, formats, dump_paths
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from numbers import Integral, Real

import yaml

from .engine import DETECTIONS, KINDS, StrategyConfig
from .errors import ConfigError, HedgeError
from .models import BlackScholes, StochVol, TimeDependentVol
from .payoffs import CONCAVE, CONVEX, Payoff

DEFAULTS = {
    "model": {"kind": "black_scholes", "spot": 100.0, "rate": 0.0, "sigma": 0.2, "sigma_knots": None,
              "v0": None, "mean_reversion": None, "long_run_var": None, "vol_of_vol": None,
              "correlation": 0.0},
    "payoff": {"kind": "call", "strike": 100.0, "knots": None, "weights": None, "intercept": 0.0,
               "slope": 0.0, "expr": None, "convexity": None},
    "strategy": {"kind": "hitting_time", "sigma_hat_sq": 0.04, "alpha": 2.0, "kappa": 0.01, "n": None,
                 "detection": "bridge", "bridge_depth": 10, "charge_switch_cost": True,
                 "min_steps_per_rebalance": 20.0},
    "grid": {"steps": 4000, "horizon": 0.5, "refine_factor": None},
    "run": {"paths": 1000, "master_seed": 0, "kappa_ladder": [0.04, 0.02, 0.01], "n_ladder": [250, 1000],
            "checkpoints": None, "kappa0": 0.15, "maturity": 1.0},
    "pricing": {"S": 100.0, "R": 0.0, "Sigma": 0.04, "method": "auto"},
    "output": {"directory": "out", "formats": ["csv", "json"], "dump_paths": False},
}

MODEL_KINDS = ("black_scholes", "time_dependent_vol", "stoch_vol")
PAYOFF_KINDS = ("call", "put", "piecewise_linear", "smooth")


@dataclass
class ExperimentConfig:
    """Validated, default-filled configuration; ``resolved`` is echoed into every output."""

    resolved: dict

    def section(self, name: str) -> dict:
        return self.resolved[name]

    def model_spec(self):
        return build_model(self.resolved["model"])

    def payoff(self) -> Payoff:
        return build_payoff(self.resolved["payoff"])

    def strategy(self, **over) -> StrategyConfig:
        s = dict(self.resolved["strategy"], **over)
        return StrategyConfig(sigma_hat_sq=s["sigma_hat_sq"], alpha=s["alpha"], kappa=s["kappa"],
                              kind=s["kind"], n=s["n"], detection=s["detection"],
                              bridge_depth=s["bridge_depth"], charge_switch_cost=s["charge_switch_cost"],
                              min_steps_per_rebalance=s["min_steps_per_rebalance"])

    @property
    def checkpoints(self) -> list:
        cp = self.resolved["run"]["checkpoints"]
        return list(cp) if cp else [self.resolved["grid"]["horizon"]]

    def to_json(self) -> str:
        return json.dumps(self.resolved, sort_keys=True)


def build_model(m: dict):
    kind = m["kind"]
    if kind == "black_scholes":
        return BlackScholes(m["sigma"], m["rate"], m["spot"])
    if kind == "time_dependent_vol":
        return TimeDependentVol(m["sigma_knots"], m["rate"], m["spot"])
    return StochVol(m["v0"], m["mean_reversion"], m["long_run_var"], m["vol_of_vol"], m["correlation"],
                    m["rate"], m["spot"])


def build_payoff(p: dict) -> Payoff:
    kind = p["kind"]
    if kind == "call":
        return Payoff.call(p["strike"])
    if kind == "put":
        return Payoff.put(p["strike"])
    if kind == "piecewise_linear":
        return Payoff.piecewise_linear(p["knots"], p["weights"], p["intercept"], p["slope"])
    return Payoff.smooth(p["expr"], p["convexity"])


def payoff_from_shorthand(text: str) -> dict:
    """'call:100', 'put:90', 'smooth:s**2/100', or an inline YAML/JSON mapping."""
    text = text.strip()
    if text.startswith("{"):
        spec = yaml.safe_load(text)
    else:
        kind, _, arg = text.partition(":")
        kind = kind.strip().lower()
        if kind in ("call", "put"):
            try:
                spec = {"kind": kind, "strike": float(arg)}
            except ValueError:
                raise ConfigError(f"payoff: cannot read strike from {text!r}") from None
        elif kind == "smooth":
            spec = {"kind": "smooth", "expr": arg}
        else:
            raise ConfigError(f"payoff: unknown shorthand {text!r} (use call:K, put:K, smooth:EXPR)")
    if not isinstance(spec, dict):
        raise ConfigError("payoff: expected a mapping")
    return spec


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------
def _num(v):
    return isinstance(v, Real) and not isinstance(v, bool) and math.isfinite(float(v))


def _int(v):
    return isinstance(v, Integral) and not isinstance(v, bool)


class _Checker:
    def __init__(self):
        self.problems = []

    def err(self, where, msg):
        self.problems.append(f"{where}: {msg}")

    def number(self, sec, key, *, positive=False, nonneg=False, optional=False):
        v = sec.get(key)
        where = key
        if v is None:
            if not optional:
                self.err(where, "required")
            return None
        if not _num(v):
            self.err(where, f"must be a finite number, got {v!r}")
            return None
        v = float(v)
        if positive and not v > 0:
            self.err(where, f"must be > 0, got {v:g}")
        if nonneg and not v >= 0:
            self.err(where, f"must be >= 0, got {v:g}")
        sec[key] = v
        return v

    def integer(self, sec, key, *, minimum=None, optional=False):
        v = sec.get(key)
        if v is None:
            if not optional:
                self.err(key, "required")
            return None
        if not _int(v):
            self.err(key, f"must be an integer, got {v!r}")
            return None
        if minimum is not None and v < minimum:
            self.err(key, f"must be >= {minimum}, got {v}")
        sec[key] = int(v)
        return int(v)

    def choice(self, sec, key, options):
        v = sec.get(key)
        if v not in options:
            self.err(key, f"must be one of {list(options)}, got {v!r}")
            return None
        return v

    def number_list(self, sec, key, *, positive=False, integer=False, optional=False):
        v = sec.get(key)
        if v is None:
            if not optional:
                self.err(key, "required")
            return None
        if not isinstance(v, (list, tuple)) or not v:
            self.err(key, "must be a non-empty list")
            return None
        ok = _int if integer else _num
        if not all(ok(x) for x in v):
            self.err(key, f"entries must be {'integers' if integer else 'finite numbers'}")
            return None
        v = [int(x) if integer else float(x) for x in v]
        if positive and any(x <= 0 for x in v):
            self.err(key, "entries must be > 0")
        sec[key] = v
        return v


def _merge(raw: dict, chk: _Checker) -> dict:
    out = copy.deepcopy(DEFAULTS)
    if raw is None:
        return out
    if not isinstance(raw, dict):
        chk.err("config", "top level must be a mapping")
        return out
    for name, body in raw.items():
        if name not in DEFAULTS:
            chk.err(str(name), f"unknown section (allowed: {sorted(DEFAULTS)})")
            continue
        if body is None:
            continue
        if not isinstance(body, dict):
            chk.err(name, "section must be a mapping")
            continue
        for k, v in body.items():
            if k not in DEFAULTS[name]:
                chk.err(f"{name}.{k}", f"unknown key (allowed: {sorted(DEFAULTS[name])})")
            else:
                out[name][k] = v
    return out


def _prefixed(chk: _Checker, prefix: str, start: int):
    chk.problems[start:] = [f"{prefix}.{p}" for p in chk.problems[start:]]


def validate(raw: dict) -> ExperimentConfig:
    """Fill defaults and check everything; raises ConfigError listing every problem."""
    chk = _Checker()
    cfg = _merge(raw, chk)

    # model
    m = cfg["model"]
    n0 = len(chk.problems)
    kind = chk.choice(m, "kind", MODEL_KINDS)
    chk.number(m, "spot", positive=True)
    chk.number(m, "rate")
    if kind == "black_scholes":
        chk.number(m, "sigma", positive=True)
    elif kind == "time_dependent_vol":
        knots = m.get("sigma_knots")
        if (not isinstance(knots, list) or not knots
                or not all(isinstance(p, (list, tuple)) and len(p) == 2 and all(_num(x) for x in p) for p in knots)):
            chk.err("sigma_knots", "must be a non-empty list of [t, sigma] pairs")
        else:
            m["sigma_knots"] = [[float(a), float(b)] for a, b in knots]
            if any(b <= 0 for _, b in m["sigma_knots"]):
                chk.err("sigma_knots", "sigma values must be > 0")
            if any(m["sigma_knots"][i + 1][0] <= m["sigma_knots"][i][0] for i in range(len(knots) - 1)):
                chk.err("sigma_knots", "times must be strictly increasing")
    elif kind == "stoch_vol":
        chk.number(m, "v0", positive=True)
        for k in ("mean_reversion", "long_run_var", "vol_of_vol"):
            chk.number(m, k, nonneg=True)
        c = chk.number(m, "correlation")
        if c is not None and not -1 <= c <= 1:
            chk.err("correlation", "must lie in [-1, 1]")
    _prefixed(chk, "model", n0)

    # payoff
    p = cfg["payoff"]
    n0 = len(chk.problems)
    pkind = chk.choice(p, "kind", PAYOFF_KINDS)
    if pkind in ("call", "put"):
        chk.number(p, "strike", positive=True)
    elif pkind == "piecewise_linear":
        k = chk.number_list(p, "knots", positive=True)
        w = chk.number_list(p, "weights")
        chk.number(p, "intercept")
        chk.number(p, "slope")
        if k and w and len(k) != len(w):
            chk.err("weights", "must have the same length as knots")
        elif w and any(x > 0 for x in w) and any(x < 0 for x in w):
            chk.err("weights", "mixed signs: payoff must be convex (all >= 0) or concave (all <= 0)")
    elif pkind == "smooth":
        if not isinstance(p.get("expr"), str) or not p["expr"].strip():
            chk.err("expr", "required: expression in s")
        if p.get("convexity") not in (None, CONVEX, CONCAVE):
            chk.err("convexity", f"must be {CONVEX!r} or {CONCAVE!r}")
    _prefixed(chk, "payoff", n0)

    # strategy
    s = cfg["strategy"]
    n0 = len(chk.problems)
    skind = chk.choice(s, "kind", KINDS)
    chk.number(s, "sigma_hat_sq", positive=True)
    alpha = chk.number(s, "alpha", positive=True)
    chk.number(s, "kappa", nonneg=True)
    chk.choice(s, "detection", DETECTIONS)
    depth = chk.integer(s, "bridge_depth", minimum=0)
    if depth is not None and depth > 30:
        chk.err("bridge_depth", "must be <= 30")
    if not isinstance(s.get("charge_switch_cost"), bool):
        chk.err("charge_switch_cost", "must be true or false")
    chk.number(s, "min_steps_per_rebalance", positive=True)
    if skind == "leland":
        chk.integer(s, "n", minimum=1)
    elif s.get("n") is not None:
        chk.integer(s, "n", minimum=1)
    _prefixed(chk, "strategy", n0)

    # grid / run / pricing / output
    g = cfg["grid"]
    n0 = len(chk.problems)
    chk.integer(g, "steps", minimum=1)
    horizon = chk.number(g, "horizon", positive=True)
    chk.integer(g, "refine_factor", minimum=1, optional=True)
    _prefixed(chk, "grid", n0)

    r = cfg["run"]
    n0 = len(chk.problems)
    chk.integer(r, "paths", minimum=1)
    seed = chk.integer(r, "master_seed", minimum=0)
    if seed is not None and seed >= 2 ** 64:
        chk.err("master_seed", "must fit in 64 bits")
    chk.number_list(r, "kappa_ladder", positive=True)
    chk.number_list(r, "n_ladder", positive=True, integer=True)
    cps = chk.number_list(r, "checkpoints", positive=True, optional=True)
    if cps and horizon and max(cps) > horizon * (1 + 1e-12):
        chk.err("checkpoints", f"must not exceed grid.horizon = {horizon:g}")
    chk.number(r, "kappa0", positive=True)
    chk.number(r, "maturity", positive=True)
    _prefixed(chk, "run", n0)

    pr = cfg["pricing"]
    n0 = len(chk.problems)
    chk.number(pr, "S", positive=True)
    chk.number(pr, "R")
    chk.number(pr, "Sigma", nonneg=True)
    chk.choice(pr, "method", ("auto", "closed", "quadrature"))
    _prefixed(chk, "pricing", n0)

    o = cfg["output"]
    n0 = len(chk.problems)
    if not isinstance(o.get("directory"), str) or not o["directory"]:
        chk.err("directory", "must be a path")
    f = o.get("formats")
    if not isinstance(f, list) or not f or any(x not in ("csv", "json") for x in f):
        chk.err("formats", "must be a non-empty subset of [csv, json]")
    if not isinstance(o.get("dump_paths"), bool):
        chk.err("dump_paths", "must be true or false")
    _prefixed(chk, "output", n0)

    # cross-section rules
    payoff_ok = pkind is not None and not any(q.startswith("payoff.") for q in chk.problems)
    if payoff_ok:
        try:
            payoff = build_payoff(p)
        except (HedgeError, ValueError, TypeError) as exc:
            chk.err("payoff", str(exc))
            payoff = None
        if payoff is not None:
            p["convexity"] = payoff.convexity
            if payoff.convexity == CONCAVE and alpha is not None and alpha <= 2 and skind == "hitting_time":
                chk.err("strategy.alpha", f"alpha = {alpha:g} rejected: alpha > 2 is required for concave "
                        "payoffs so that the shrunk variance (1 - 2/alpha) Sigma stays positive")
            if skind == "leland" and payoff.convexity == CONCAVE:
                chk.err("strategy.kind", "leland strategy requires a convex payoff")
            if not payoff.has_nonvanishing_gamma():
                chk.err("payoff", "affine payoff: gamma vanishes identically (non-degeneracy condition)")
    if skind == "leland" and kind is not None and kind != "black_scholes":
        chk.err("strategy.kind", "leland strategy requires model.kind = black_scholes")
    if g.get("refine_factor") not in (None, 1) and kind == "stoch_vol":
        chk.err("grid.refine_factor", "bridge refinement needs a deterministic-variance model")

    if chk.problems:
        raise ConfigError(chk.problems)
    return ExperimentConfig(cfg)


def parse_config(text: str | None) -> ExperimentConfig:
    """Parse YAML/JSON text and validate it."""
    if text is None or not text.strip():
        return validate({})
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: not valid YAML/JSON ({exc})") from None
    return validate(raw or {})
