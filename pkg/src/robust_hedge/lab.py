"""Monte Carlo checks of the small-cost limit theorems.

For the hitting-time strategy the normalized error Z_t = (F - V~_t)/kappa
should behave, as kappa -> 0, like W(Q_t) for a Brownian motion W
independent of the stock, with

    Q_t = (alpha +- 2)^2 / 6 * int_0^t |s~ Gamma|^2 d<s~>,

and the rebalance count should satisfy kappa^2 N_t -> <log s~>_t / alpha^2.
Leland's equidistant strategy with kappa_n = kappa0 / sqrt(n) has the same
structure with coefficient beta(sigma/kappa0) instead of
beta_hat(sigma/kappa0) = (alpha + 2)^2 / 6.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .engine import (GreekPath, StrategyConfig, hitting_greeks, leland_greeks, run_hitting_time,
                     run_leland, tau_index)
from .errors import DomainError
from .models import BlackScholes, ModelSpec, PathGrid, path_seed, simulate_path
from .payoffs import CONCAVE, Payoff
from .pricing import greeks

log = logging.getLogger(__name__)


def beta(x: float) -> float:
    """Leland coefficient: x^2/2 + sqrt(2/pi) x + 1 - 2/pi."""
    return 0.5 * x * x + math.sqrt(2.0 / math.pi) * x + 1.0 - 2.0 / math.pi


def beta_hat(x: float) -> float:
    """Hitting-time coefficient: pi x^2/12 + sqrt(2 pi)/3 x + 2/3 = (alpha + 2)^2 / 6."""
    return math.pi * x * x / 12.0 + math.sqrt(2.0 * math.pi) / 3.0 * x + 2.0 / 3.0


def alpha_from_kappa0(sigma: float, kappa0: float) -> float:
    """alpha = (sigma / kappa0) sqrt(pi/2), the value that makes Leland's delta the hitting-time delta."""
    if not (sigma > 0 and kappa0 > 0):
        raise DomainError("sigma and kappa0 must be positive")
    return sigma / kappa0 * math.sqrt(math.pi / 2.0)


def q_prefactor(alpha: float, convexity: str = "convex") -> float:
    sign = -1.0 if convexity == CONCAVE else 1.0
    return (alpha + 2.0 * sign) ** 2 / 6.0


# ---------------------------------------------------------------------------
# limit quantities on one path
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LimitQuantities:
    q_path: np.ndarray            # Q_t on the grid
    gamma_integral: np.ndarray    # int_0^t |s~ Gamma|^2 d<s~>
    count_limit: np.ndarray       # <log s~>_t / alpha^2 (limit of kappa^2 N_t)
    prefactor: float


def gamma_integral(path: PathGrid, gamma: np.ndarray) -> np.ndarray:
    """Trapezoidal int_0^t |s~ Gamma|^2 d<s~> with d<s~> = s~^2 d<log s~>."""
    y = (path.s_tilde ** 2 * gamma) ** 2
    inc = 0.5 * (y[1:] + y[:-1]) * np.diff(path.qv)
    return np.concatenate([[0.0], np.cumsum(inc)])


def limit_q(path: PathGrid, payoff: Payoff, cfg: StrategyConfig,
            greeks_cache: GreekPath | None = None) -> LimitQuantities:
    """Q_t, the gamma integral and the count limit along ``path`` (before tau only)."""
    gp = greeks_cache if greeks_cache is not None else hitting_greeks(path, payoff, cfg)
    if gp.tau <= path.steps:
        raise DomainError("Q_t is only defined before the variance budget is exhausted; "
                          "the path reaches tau")
    gi = gamma_integral(path, gp.gamma)
    pref = q_prefactor(cfg.alpha, payoff.convexity)
    return LimitQuantities(pref * gi, gi, path.qv / cfg.alpha ** 2, pref)


def expected_gamma_integral(payoff: Payoff, sigma: float, spot: float, sigma_hat_sq: float,
                            variance_factor: float, t: float, *, time_nodes: int = 96,
                            panels: int = 160, panel_nodes: int = 8) -> float:
    """E[int_0^t |s~ Gamma|^2 d<s~>] under Black-Scholes with zero rate, by quadrature.

    Gamma is taken at remaining variance variance_factor * (sigma_hat_sq - sigma^2 u).
    Deterministic replacement for a brute-force fine-grid Monte Carlo estimate.
    """
    if not t * sigma ** 2 < sigma_hat_sq:
        raise DomainError("t must lie before the variance budget is exhausted")
    uq, uw = np.polynomial.legendre.leggauss(time_nodes)
    u = 0.5 * t * (uq + 1.0)
    uw = 0.5 * t * uw
    xi, wl = np.polynomial.legendre.leggauss(panel_nodes)
    L = 12.0
    edges = np.linspace(-L, L, panels + 1)
    z = (0.5 * (edges[:-1] + edges[1:])[:, None] + 0.5 * np.diff(edges)[:, None] * xi[None, :]).ravel()
    zw = (0.5 * np.diff(edges)[:, None] * wl[None, :]).ravel() * stats.norm.pdf(z)
    total = 0.0
    for ui, wi in zip(u, uw):
        s = spot * np.exp(sigma * math.sqrt(ui) * z - 0.5 * sigma ** 2 * ui)
        g = greeks(payoff, s, 0.0, variance_factor * (sigma_hat_sq - sigma ** 2 * ui)).gamma
        total += wi * sigma ** 2 * np.sum(zw * (s * s * g) ** 2)
    return float(total)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CellStats:
    """Statistics of Z at one (kappa, checkpoint) pair."""

    kappa: float
    t: float
    paths: int
    mean_z: float
    var_z: float
    mean_q: float
    var_ratio: float
    var_ratio_ci: tuple
    mse_ratio: float
    mse_ratio_se: float
    skewness: float
    excess_kurtosis: float
    ks_distance: float
    ks_pvalue: float
    corr_with_stock: float
    kappa2_n_mean: float
    kappa2_n_std: float
    count_limit_mean: float
    mean_rebalances: float
    alarms: int
    flags: tuple = ()

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["var_ratio_ci"] = list(self.var_ratio_ci)
        d["flags"] = list(self.flags)
        return d


def cell_stats(kappa: float, t: float, z: np.ndarray, q: np.ndarray, n: np.ndarray,
               s_tilde: np.ndarray, count_limit: np.ndarray, alarms: int = 0,
               level: float = 0.95) -> CellStats:
    m = z.shape[0]
    flags = []
    nan = float("nan")
    if m < 2:
        flags.append("insufficient_paths")
        return CellStats(kappa, t, m, float(np.mean(z)) if m else nan, nan, float(np.mean(q)) if m else nan,
                         nan, (nan, nan), nan, nan, nan, nan, nan, nan, nan,
                         float(kappa ** 2 * np.mean(n)) if m else nan, nan,
                         float(np.mean(count_limit)) if m else nan, float(np.mean(n)) if m else nan,
                         alarms, tuple(flags))
    mq = float(np.mean(q))
    var = float(np.var(z, ddof=1))
    ratio = var / mq
    lo = (m - 1) * var / stats.chi2.ppf(0.5 + level / 2, m - 1) / mq
    hi = (m - 1) * var / stats.chi2.ppf(0.5 - level / 2, m - 1) / mq
    z2 = z * z
    mz2 = float(np.mean(z2))
    mse = mz2 / mq
    cov = np.cov(np.vstack([z2, q]))
    grad = np.array([1.0 / mq, -mz2 / mq ** 2])
    mse_se = float(math.sqrt(max(grad @ cov @ grad, 0.0) / m))
    u = z / np.sqrt(q)
    ks = stats.kstest(u, "norm")
    corr = float(np.corrcoef(u, s_tilde)[0, 1]) if np.std(s_tilde) > 0 and np.std(u) > 0 else nan
    if alarms:
        flags.append("grid_resolution_alarm")
    k2n = kappa ** 2 * n
    return CellStats(
        kappa=float(kappa), t=float(t), paths=m, mean_z=float(np.mean(z)), var_z=var, mean_q=mq,
        var_ratio=ratio, var_ratio_ci=(float(lo), float(hi)), mse_ratio=mse, mse_ratio_se=mse_se,
        skewness=float(stats.skew(u)), excess_kurtosis=float(stats.kurtosis(u)),
        ks_distance=float(ks.statistic), ks_pvalue=float(ks.pvalue), corr_with_stock=corr,
        kappa2_n_mean=float(np.mean(k2n)), kappa2_n_std=float(np.std(k2n, ddof=1)),
        count_limit_mean=float(np.mean(count_limit)), mean_rebalances=float(np.mean(n)),
        alarms=int(alarms), flags=tuple(flags))


# ---------------------------------------------------------------------------
# parallel path loop
# ---------------------------------------------------------------------------
def map_paths(fn, paths: int, threads: int = 1, chunk: int = 64):
    """Apply fn(i) for i in range(paths); results in path order whatever the thread count."""
    blocks = [range(i, min(i + chunk, paths)) for i in range(0, paths, chunk)]

    def run(block):
        return [fn(i) for i in block]

    if threads <= 1:
        out = [run(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(run, blocks))
    return [r for block in out for r in block]


def _checkpoint_indices(times: np.ndarray, checkpoints: Sequence[float]) -> np.ndarray:
    horizon = times[-1]
    steps = times.shape[0] - 1
    idx = np.rint(np.asarray(checkpoints, float) / horizon * steps).astype(int)
    if np.any(np.abs(times[idx] - np.asarray(checkpoints)) > 1e-9 * max(1.0, horizon)):
        raise DomainError("checkpoints must fall on the simulation grid")
    return idx


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------
@dataclass
class ConvergenceReport:
    config: dict
    cells: list
    targets: dict
    per_path: dict = field(repr=False)
    flags: list = field(default_factory=list)

    def cell(self, kappa: float, t: float | None = None) -> CellStats:
        for c in self.cells:
            if math.isclose(c.kappa, kappa) and (t is None or math.isclose(c.t, t)):
                return c
        raise KeyError((kappa, t))

    def to_dict(self) -> dict:
        return {"config": self.config, "targets": self.targets, "flags": list(self.flags),
                "cells": [c.to_dict() for c in self.cells]}


def convergence_study(model: ModelSpec, payoff: Payoff, strategy: StrategyConfig,
                      kappas: Sequence[float], paths: int, checkpoints: Sequence[float],
                      master_seed: int, steps: int, threads: int = 1,
                      horizon: float | None = None) -> ConvergenceReport:
    """Hitting-time runs over a kappa ladder with common random numbers.

    Every kappa level reuses the same simulated paths (seeded per path from
    ``master_seed``) and the same greek path; Q is computed on the same path.
    Paths are simulated on [0, horizon] (default: the last checkpoint) with
    ``steps`` steps and every checkpoint must be a grid time.
    """
    if paths < 1:
        raise DomainError("paths must be >= 1")
    kappas = [float(k) for k in kappas]
    if not kappas or min(kappas) <= 0:
        raise DomainError("kappa ladder must be non-empty and positive")
    checkpoints = sorted(float(c) for c in checkpoints)
    horizon = checkpoints[-1] if horizon is None else float(horizon)
    if checkpoints[-1] > horizon * (1 + 1e-12):
        raise DomainError("checkpoints must not exceed the horizon")
    strategy = replace(strategy, kind="hitting_time")
    pref = q_prefactor(strategy.alpha, payoff.convexity)

    def one(i):
        path = simulate_path(model, horizon, steps, path_seed(master_seed, i))
        idx = _checkpoint_indices(path.times, checkpoints)
        gp = hitting_greeks(path, payoff, strategy)
        if gp.tau <= idx[-1]:
            raise DomainError("checkpoint at or past tau: Q is undefined there")
        q = pref * gamma_integral(path, gp.gamma)[idx]
        z = np.empty((len(kappas), len(idx)))
        n = np.empty((len(kappas), len(idx)))
        alarm = np.zeros(len(kappas), bool)
        for j, kap in enumerate(kappas):
            out = run_hitting_time(path, payoff, replace(strategy, kappa=kap), greeks_cache=gp)
            z[j] = out.z_path[idx]
            n[j] = out.n_rebalances[idx]
            alarm[j] = out.resolution_alarm
        return z, n, q, path.s_tilde[idx], path.qv[idx] / strategy.alpha ** 2, alarm

    res = map_paths(one, paths, threads)
    Z = np.stack([r[0] for r in res])          # (paths, kappas, checkpoints)
    N = np.stack([r[1] for r in res])
    Q = np.stack([r[2] for r in res])          # (paths, checkpoints)
    S = np.stack([r[3] for r in res])
    C = np.stack([r[4] for r in res])
    A = np.stack([r[5] for r in res])          # (paths, kappas)
    cells = []
    for j, kap in enumerate(kappas):
        for c, t in enumerate(checkpoints):
            cells.append(cell_stats(kap, t, Z[:, j, c], Q[:, c], N[:, j, c], S[:, c], C[:, c],
                                    alarms=int(A[:, j].sum())))
    flags = []
    if paths < 2:
        flags.append("insufficient_paths: variance statistics undefined")
    if A.any():
        flags.append(f"grid_resolution_alarm on {int(A.any(axis=1).sum())} paths")
    config = {"model": _model_dict(model), "payoff": payoff.describe(),
              "strategy": _strategy_dict(strategy), "kappas": kappas, "paths": int(paths),
              "checkpoints": checkpoints, "master_seed": int(master_seed), "steps": int(steps),
              "horizon": horizon}
    targets = {"var_ratio": 1.0, "mse_ratio": 1.0, "q_prefactor": pref,
               "kappa2_n": [float(np.mean(C[:, c])) for c in range(len(checkpoints))]}
    per_path = {"z": Z, "n": N, "q": Q, "s_tilde": S, "count_limit": C, "alarm": A}
    return ConvergenceReport(config, cells, targets, per_path, flags)


# ---------------------------------------------------------------------------
# Leland comparison
# ---------------------------------------------------------------------------
@dataclass
class LelandReport:
    config: dict
    rows: list
    per_path: dict = field(repr=False)

    def row(self, n: int) -> dict:
        for r in self.rows:
            if r["n"] == n:
                return r
        raise KeyError(n)

    def to_dict(self) -> dict:
        return {"config": self.config, "rows": self.rows}


def compare_leland(sigma: float, kappa0: float, ns: Sequence[int], payoff: Payoff, paths: int,
                   master_seed: int, steps: int, checkpoint: float = 0.5, spot: float = 100.0,
                   bridge_depth: int = 10, threads: int = 1) -> LelandReport:
    """Leland (n, kappa0/sqrt(n)) against the hitting-time strategy with matching alpha.

    Both strategies run on the same paths with Sigma_hat = sigma^2, T = 1 and
    zero rate; errors are compared at ``checkpoint`` (strictly before T).
    """
    if paths < 1:
        raise DomainError("paths must be >= 1")
    if not 0 < checkpoint < 1:
        raise DomainError("checkpoint must lie in (0, 1)")
    model = BlackScholes(sigma, 0.0, spot)
    alpha = alpha_from_kappa0(sigma, kappa0)
    x = sigma / kappa0
    rows = []
    per_path = {}
    oracle = expected_gamma_integral(payoff, sigma, spot, sigma ** 2, 1.0 + 2.0 / alpha, checkpoint)
    for n in ns:
        n = int(n)
        kap = kappa0 / math.sqrt(n)
        cfg = StrategyConfig(sigma_hat_sq=sigma ** 2, alpha=alpha, kappa=kap, bridge_depth=bridge_depth)

        def one(i, n=n, kap=kap, cfg=cfg):
            path = simulate_path(model, checkpoint, steps, path_seed(master_seed, i))
            gh = hitting_greeks(path, payoff, cfg)
            hit = run_hitting_time(path, payoff, cfg, greeks_cache=gh)
            lel = run_leland(path, payoff, sigma, kap, n)
            gi = gamma_integral(path, gh.gamma)[-1]
            return hit.z_path[-1], lel.z_path[-1], hit.n_rebalances[-1], lel.n_rebalances[-1], gi

        res = np.array(map_paths(one, paths, threads))
        zh, zl, nh, nl, gi = res.T
        mse_h = float(np.mean(zh ** 2))
        mse_l = float(np.mean(zl ** 2))
        target = beta(x) / beta_hat(x)
        ratio = mse_l / mse_h if mse_h > 0 else float("nan")
        rows.append({
            "n": n, "kappa_n": kap, "alpha": alpha, "paths": int(paths), "checkpoint": checkpoint,
            "mse_leland": mse_l, "mse_hitting": mse_h, "mse_ratio": ratio,
            "target_ratio": target, "ratio_over_target": ratio / target,
            "beta": beta(x), "beta_hat": beta_hat(x),
            "gamma_integral_mc": float(np.mean(gi)), "gamma_integral_oracle": oracle,
            "leland_normalized": mse_l / oracle, "hitting_normalized": mse_h / oracle,
            "mean_z_leland": float(np.mean(zl)), "mean_z_hitting": float(np.mean(zh)),
            "mean_rebalances_hitting": float(np.mean(nh)), "rebalances_leland": float(np.mean(nl)),
            "count_ratio": float(np.mean(nh)) / (n * checkpoint), "count_target": 2.0 / math.pi,
        })
        per_path[n] = {"z_hitting": zh, "z_leland": zl, "n_hitting": nh, "gamma_integral": gi}
    config = {"sigma": sigma, "kappa0": kappa0, "ns": [int(n) for n in ns], "payoff": payoff.describe(),
              "paths": int(paths), "master_seed": int(master_seed), "steps": int(steps),
              "checkpoint": checkpoint, "spot": spot, "bridge_depth": int(bridge_depth)}
    return LelandReport(config, rows, per_path)


def _model_dict(model) -> dict:
    d = {"kind": type(model).__name__}
    for k, v in vars(model).items():
        d[k] = repr(v) if callable(v) else v
    return d


def _strategy_dict(cfg: StrategyConfig) -> dict:
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
