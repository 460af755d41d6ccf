"""Self-financing hedging ledgers along a simulated path.

Three strategies, all in units of the bond (discounted) internally:

* continuous   delta hedge at every grid point, no costs
* hitting_time rebalance when the delta has moved by alpha*kappa*s~|Gamma| since
               the last trade, paying kappa*|dPi|*S1 per trade
* leland       equidistant rebalancing with Leland's enlarged volatility

Every strategy targets the remaining variance Sigma_t = Sigma_hat - <log S~>_t
(scaled by 1 +- 2/alpha for the hitting-time strategy) and, once that budget
is used up, switches to the supporting line (a, b) of the payoff and holds it.

Hitting times are located on the simulation grid and, when the model allows
it, refined inside the crossing interval by Brownian-bridge bisection in the
quadratic-variation clock.  Bridge normals come from a counter-based hash of
(path seed, interval, dyadic position), so a refined path is reproducible.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numba as nb
import numpy as np

from .errors import ConditionViolation, DomainError, GridResolutionWarning
from .models import BlackScholes, PathGrid
from .payoffs import CONCAVE, Payoff
from .pricing import greeks, pl_delta_gamma

log = logging.getLogger(__name__)

KINDS = ("continuous", "hitting_time", "leland")
DETECTIONS = ("bridge", "grid")
EV_INITIAL, EV_REBALANCE, EV_SWITCH = 0, 1, 2
TAU_RTOL = 1e-10
CROSS_REFINE = 1e-3  # bisect an interval when its bridge crossing probability exceeds this
# event table columns
_EVF = ("t", "s_tilde", "s1", "s0", "pi_before", "pi_after", "bond_before", "bond_after",
        "cost", "band", "gap", "prev_gap", "qv")
_EVI = ("interval", "position", "kind")


@dataclass(frozen=True)
class StrategyConfig:
    """Parameters of one hedging run.

    The sign of the variance adjustment (+alpha for convex payoffs, -alpha
    for concave) is derived from the payoff at run time.

    ``detection="grid"`` rebalances at the first grid point where the
    trigger holds.  ``detection="bridge"`` also accounts for crossings
    between grid points: intervals are bisected (at most ``bridge_depth``
    times) along a Brownian bridge while a crossing is likely, and the
    remaining crossing probability is settled by a hashed uniform.
    """

    sigma_hat_sq: float
    alpha: float = 2.0
    kappa: float = 0.0
    kind: str = "hitting_time"
    n: int | None = None
    detection: str = "bridge"
    bridge_depth: int = 10
    charge_switch_cost: bool = True
    min_steps_per_rebalance: float = 20.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not self.sigma_hat_sq > 0:
            raise DomainError("sigma_hat_sq must be positive")
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")
        if not self.kappa >= 0:
            raise DomainError("kappa must be non-negative")
        if self.kind == "leland" and (self.n is None or int(self.n) < 1):
            raise DomainError("leland strategy needs n >= 1")
        if self.detection not in DETECTIONS:
            raise ValueError(f"detection must be one of {DETECTIONS}")
        if not 0 <= int(self.bridge_depth) <= 30:
            raise DomainError("bridge_depth must lie in [0, 30]")

    def variance_factor(self, payoff: Payoff) -> float:
        """1 + 2/alpha for convex payoffs, 1 - 2/alpha for concave."""
        if payoff.convexity == CONCAVE:
            if self.alpha <= 2:
                raise ConditionViolation("alpha > 2 is required for concave payoffs "
                                         "(the shrunk variance (1 - 2/alpha) Sigma must stay positive)")
            return 1.0 - 2.0 / self.alpha
        return 1.0 + 2.0 / self.alpha


@dataclass(frozen=True)
class HedgeState:
    """Holdings after the last grid point."""

    stock: float
    bond: float
    last_trade_time: float
    cost_paid: float
    stopped: bool


@dataclass(frozen=True)
class TradeLedger:
    """One row per trade, including the initial purchase and the switch at tau."""

    t: np.ndarray
    s_tilde: np.ndarray
    s1: np.ndarray
    s0: np.ndarray
    pi_before: np.ndarray
    pi_after: np.ndarray
    bond_before: np.ndarray
    bond_after: np.ndarray
    cost: np.ndarray
    band: np.ndarray
    gap: np.ndarray
    prev_gap: np.ndarray
    qv: np.ndarray
    interval: np.ndarray
    position: np.ndarray
    kind: np.ndarray

    def __len__(self):
        return self.t.shape[0]


@dataclass(frozen=True)
class HedgeOutcome:
    kind: str
    kappa: float
    times: np.ndarray
    rebalance_times: np.ndarray      # includes t = 0, excludes the switch at tau
    n_rebalances: np.ndarray         # N_t on the grid (trades in (0, t], excluding the switch)
    stock: np.ndarray                # Pi on the grid (after trading)
    bond: np.ndarray                 # Pi^0 on the grid (after trading)
    value: np.ndarray                # V_t = Pi S1 + Pi^0 S0
    value_discounted: np.ndarray     # V~_t = V_t / S0
    reference: np.ndarray            # F(s~_t, Sigma_t), frozen at a s~ + b after tau
    z_path: np.ndarray               # (reference - V~) / kappa, or unnormalized when kappa = 0
    remaining_variance: np.ndarray   # Sigma used for the greeks (NaN from tau on)
    gamma: np.ndarray                # Gamma(s~_t, 0, Sigma_t) on the grid
    tau_index: int                   # first grid index with qv >= sigma_hat_sq (steps + 1 if none)
    terminal_shortfall: float        # f(S1) - V at the last grid point
    initial_price_charged: float     # P_0 + kappa |Pi_0| S1_0, in currency
    total_cost_paid: float           # currency
    trades: TradeLedger = field(repr=False)
    final_state: HedgeState = field(repr=False)
    steps_per_rebalance: float = math.inf
    resolution_alarm: bool = False
    bridge_depth_used: int = 0

    @property
    def horizon_index(self) -> int:
        return self.times.shape[0] - 1


@dataclass(frozen=True)
class GreekPath:
    """Greeks of the target price along a path, shared by runs that differ only in kappa."""

    sigma: np.ndarray
    price: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    tau: int
    switch_stock: float
    switch_bond: float


# ---------------------------------------------------------------------------
# numba kernel
# ---------------------------------------------------------------------------
@nb.njit(cache=True)
def _splitmix64(x):
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@nb.njit(cache=True)
def bridge_normal(seed, interval, pos):
    """Standard normal keyed by (seed, interval, pos); Box-Muller on two hashed uniforms."""
    key = np.uint64(interval) * np.uint64(0xD1B54A32D192ED03) + np.uint64(pos)
    h1 = _splitmix64(seed ^ _splitmix64(key))
    h2 = _splitmix64(h1)
    u1 = (float(h1 >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16
    u2 = float(h2 >> np.uint64(11)) * 1.1102230246251565e-16
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@nb.njit(cache=True)
def hash_uniform(seed, interval, pos):
    """Uniform on (0, 1) keyed by (seed, interval, pos), independent of bridge_normal."""
    key = np.uint64(interval) * np.uint64(0x9E6C63D0676A9A99) + np.uint64(pos)
    h = _splitmix64(_splitmix64(seed ^ np.uint64(0x5851F42D4C957F2D)) ^ key)
    return (float(h >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16


@nb.njit(cache=True, error_model="numpy")
def _cross_prob(g_l, sg_l, g_p, sg_p, band, h):
    """Probability that the delta gap leaves (-band, band) between two points inside it.

    The gap is linearized in x = log s~ at each end (slope s~|Gamma|), which
    turns the band into two boundaries moving linearly between the points; a
    Brownian bridge with qv-duration h crosses a linear boundary at distances
    d_l, d_p with probability exp(-2 d_l d_p / h).
    """
    if h <= 0.0 or sg_l <= 0.0 or sg_p <= 0.0:
        return 0.0
    # distances in log-price; a vanishing slope means the boundary is out of reach (inf)
    up = ((band - g_l) / sg_l) * ((band - g_p) / sg_p)
    lo = ((band + g_l) / sg_l) * ((band + g_p) / sg_p)
    return min(1.0, math.exp(-2.0 * up / h) + math.exp(-2.0 * lo / h))


@nb.njit(cache=True)
def _record(evf, evi, ne, t, st, s1, s0, pb, pa, bb, ba, cost, band, gap, pgap, q, k, pos, kind):
    if ne >= evf.shape[0]:
        return ne + 1
    evf[ne, 0] = t
    evf[ne, 1] = st
    evf[ne, 2] = s1
    evf[ne, 3] = s0
    evf[ne, 4] = pb
    evf[ne, 5] = pa
    evf[ne, 6] = bb
    evf[ne, 7] = ba
    evf[ne, 8] = cost
    evf[ne, 9] = band
    evf[ne, 10] = gap
    evf[ne, 11] = pgap
    evf[ne, 12] = q
    evi[ne, 0] = k
    evi[ne, 1] = pos
    evi[ne, 2] = kind
    return ne + 1


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _ledger(mode, times, st, s1, s0, qv, delta, gamma, mask, tau, a_sw, charge_sw,
            kappa, alpha, v0, depth, use_prob, seed, sigma_hat, cfac, B, strikes, weights,
            pi_g, pi0_g, n_g, evf, evi):
    m = st.shape[0] - 1
    # initial purchase, funded by v0 plus the charged initial cost
    pi = delta[0]
    cost0 = kappa * abs(pi)
    pi0 = (v0 + cost0 * st[0]) - (pi + cost0) * s1[0] / s0[0]
    paid = cost0 * s1[0]
    band = alpha * kappa * st[0] * abs(gamma[0])
    ne = _record(evf, evi, 0, times[0], st[0], s1[0], s0[0], 0.0, pi, v0 + cost0 * st[0], pi0,
                 cost0 * s1[0], band, abs(pi), -1.0, qv[0], 0, 0, 0)
    pi_g[0] = pi
    pi0_g[0] = pi0
    n_g[0] = 0
    n = 0
    stopped = False
    full = 1 << depth
    sp_pos = np.empty(depth + 2, np.int64)
    sp_x = np.empty(depth + 2)
    sp_d = np.empty(depth + 2)
    sp_sg = np.empty(depth + 2)
    sp_grid = np.empty(depth + 2, np.bool_)
    last_t = times[0]
    prev_gap = 0.0
    for k in range(1, m + 1):
        if stopped:
            pi_g[k] = pi
            pi0_g[k] = pi0
            n_g[k] = n
            continue
        if k == tau:
            d = a_sw - pi
            c = kappa * abs(d) if charge_sw else 0.0
            new0 = pi0 - (d + c) * s1[k] / s0[k]
            ne = _record(evf, evi, ne, times[k], st[k], s1[k], s0[k], pi, a_sw, pi0, new0,
                         c * s1[k], 0.0, abs(d), prev_gap, qv[k], k, full, 2)
            paid += c * s1[k]
            pi = a_sw
            pi0 = new0
            stopped = True
        elif mode == 0 or (mode == 2 and mask[k]):
            d = delta[k] - pi
            c = kappa * abs(d)
            new0 = pi0 - (d + c) * s1[k] / s0[k]
            ne = _record(evf, evi, ne, times[k], st[k], s1[k], s0[k], pi, delta[k], pi0, new0,
                         c * s1[k], 0.0, abs(d), prev_gap, qv[k], k, full, 1)
            paid += c * s1[k]
            pi = delta[k]
            pi0 = new0
            n += 1
            last_t = times[k]
        elif mode == 1:
            # Points of (k-1, k] are visited left to right.  The stack holds the
            # known points to the right of the last visited point l; an interval
            # (l, p] is bisected while p is outside the band or the bridge between
            # l and p crosses the band with probability above CROSS_REFINE.
            l_pos = 0
            l_x = math.log(st[k - 1])
            l_d = delta[k - 1]
            l_sg = st[k - 1] * abs(gamma[k - 1])
            sp_pos[0] = full
            sp_x[0] = math.log(st[k])
            sp_d[0] = delta[k]
            sp_sg[0] = st[k] * abs(gamma[k])
            sp_grid[0] = True
            sp = 1
            q0 = qv[k - 1]
            dq = qv[k] - qv[k - 1]
            t0 = times[k - 1]
            dt = times[k] - times[k - 1]
            ls0 = math.log(s0[k - 1])
            dls0 = math.log(s0[k]) - ls0
            while sp > 0:
                top = sp - 1
                p_pos = sp_pos[top]
                p_x = sp_x[top]
                dlt = sp_d[top]
                gap = abs(dlt - pi)
                outside = gap >= band
                prob = 0.0
                if use_prob and not outside:
                    prob = _cross_prob(l_d - pi, l_sg, dlt - pi, sp_sg[top], band,
                                       dq * (p_pos - l_pos) / full)
                if p_pos - l_pos >= 2 and (outside or prob > CROSS_REFINE):
                    m_pos = (l_pos + p_pos) // 2
                    w = (m_pos - l_pos) / (p_pos - l_pos)
                    var = dq * (m_pos - l_pos) * (p_pos - m_pos) / ((p_pos - l_pos) * full)
                    xm = l_x + (p_x - l_x) * w + math.sqrt(max(var, 0.0)) * bridge_normal(seed, k, m_pos)
                    stm = math.exp(xm)
                    sig = cfac * (sigma_hat - (q0 + dq * m_pos / full))
                    dm, gm = pl_delta_gamma(stm, sig, B, strikes, weights)
                    sp_pos[sp] = m_pos
                    sp_x[sp] = xm
                    sp_d[sp] = dm
                    sp_sg[sp] = stm * abs(gm)
                    sp_grid[sp] = False
                    sp += 1
                    continue
                sp -= 1
                trade = outside
                if not outside and prob > 0.0:
                    trade = hash_uniform(seed, k, p_pos) < prob
                if trade:
                    frac = p_pos / full
                    p_st = math.exp(p_x)
                    if sp_grid[top]:
                        p_st = st[k]
                        ps1 = s1[k]
                        ps0 = s0[k]
                        pt = times[k]
                    else:
                        ps0 = math.exp(ls0 + dls0 * frac)
                        ps1 = p_st * ps0
                        pt = t0 + dt * frac
                    d = dlt - pi
                    c = kappa * abs(d)
                    new0 = pi0 - (d + c) * ps1 / ps0
                    ne = _record(evf, evi, ne, pt, p_st, ps1, ps0, pi, dlt, pi0, new0, c * ps1,
                                 band, gap, prev_gap, q0 + dq * frac, k, p_pos, 1)
                    paid += c * ps1
                    pi = dlt
                    pi0 = new0
                    band = alpha * kappa * sp_sg[top]
                    n += 1
                    last_t = pt
                    prev_gap = 0.0
                else:
                    prev_gap = gap
                l_pos = p_pos
                l_x = p_x
                l_d = dlt
                l_sg = sp_sg[top]
        pi_g[k] = pi
        pi0_g[k] = pi0
        n_g[k] = n
    return ne, paid, last_t


# ---------------------------------------------------------------------------
# python side
# ---------------------------------------------------------------------------
def tau_index(qv: np.ndarray, sigma_hat_sq: float) -> int:
    """First grid index where the variance budget is exhausted (len(qv) if never)."""
    hit = np.nonzero(qv >= sigma_hat_sq * (1.0 - TAU_RTOL))[0]
    return int(hit[0]) if hit.size else qv.shape[0]


def greek_path(path: PathGrid, payoff: Payoff, remaining: np.ndarray, tau: int) -> GreekPath:
    """Price, delta and gamma of F(s~, Sigma) on the grid for indices before tau."""
    m1 = path.times.shape[0]
    sig = np.full(m1, np.nan)
    sig[:tau] = remaining[:tau]
    if np.any(sig[:tau] <= 0):
        raise DomainError("remaining variance must stay positive before tau")
    price = np.full(m1, np.nan)
    delta = np.full(m1, np.nan)
    gamma = np.full(m1, np.nan)
    if tau > 0:
        g = greeks(payoff, path.s_tilde[:tau], 0.0, sig[:tau])
        price[:tau], delta[:tau], gamma[:tau] = g.price, g.delta, g.gamma
    a = b = np.nan
    if tau < m1:
        a, b = payoff.kink_selection(float(path.s_tilde[tau]))
        # frozen reference a s~ + b from tau on
        price[tau:] = a * path.s_tilde[tau:] + b
    return GreekPath(sig, price, delta, gamma, tau, a, b)


def _prepare_hitting(path, payoff, cfg):
    tau = tau_index(path.qv, cfg.sigma_hat_sq)
    c = cfg.variance_factor(payoff)
    return greek_path(path, payoff, c * (cfg.sigma_hat_sq - path.qv), tau)


def _run(path: PathGrid, payoff: Payoff, cfg: StrategyConfig, gp: GreekPath, mode: int,
         mask=None, depth=0, cfac=1.0, use_prob=False, strategy_kind=None) -> HedgeOutcome:
    if gp.tau == 0:
        raise DomainError("variance budget is already exhausted at t = 0")
    m1 = path.times.shape[0]
    kappa = float(cfg.kappa)
    if payoff.is_piecewise_linear:
        _, B, ks, ws = payoff.canonical_arrays()
    else:
        B, ks, ws = 0.0, np.zeros(0), np.zeros(0)
        depth = 0
    if not path.bridgeable:
        depth = 0
    mask = np.zeros(m1, np.bool_) if mask is None else np.ascontiguousarray(mask, np.bool_)
    pi_g = np.empty(m1)
    pi0_g = np.empty(m1)
    n_g = np.empty(m1, np.int64)
    # the kernel expects NaN-free greeks before tau
    delta = np.where(np.isnan(gp.delta), 0.0, gp.delta)
    gamma = np.where(np.isnan(gp.gamma), 0.0, gp.gamma)
    v0 = float(gp.price[0])
    cap = 2 * m1 + 16
    seed = np.uint64(path.seed & 0xFFFFFFFFFFFFFFFF)
    while True:
        evf = np.empty((cap, len(_EVF)))
        evi = np.empty((cap, len(_EVI)), np.int64)
        ne, paid, last_t = _ledger(
            mode, path.times, path.s_tilde, path.s1, path.s0, path.qv, delta, gamma, mask,
            gp.tau, float(gp.switch_stock) if gp.tau < m1 else 0.0, bool(cfg.charge_switch_cost),
            kappa, float(cfg.alpha), v0, int(depth), bool(use_prob), seed, float(cfg.sigma_hat_sq), float(cfac),
            float(B), ks, ws, pi_g, pi0_g, n_g, evf, evi)
        if ne <= cap:
            break
        cap = 2 * ne
    trades = TradeLedger(*(evf[:ne, i].copy() for i in range(len(_EVF))),
                         *(evi[:ne, i].copy() for i in range(len(_EVI))))
    value_disc = pi_g * path.s_tilde + pi0_g
    value = value_disc * path.s0
    ref = gp.price
    diff = ref - value_disc
    if gp.tau < m1:
        # after tau the error is frozen at its value at tau
        diff[gp.tau:] = diff[gp.tau]
    z = diff / kappa if kappa > 0 else diff
    reb = trades.t[trades.kind != EV_SWITCH]
    n_last = int(n_g[-1])
    stop = min(gp.tau, m1 - 1)
    steps_per = (stop / n_last) if n_last > 0 else math.inf
    alarm = mode == 1 and steps_per < cfg.min_steps_per_rebalance
    if alarm:
        warnings.warn(f"only {steps_per:.1f} grid steps per rebalance (floor "
                      f"{cfg.min_steps_per_rebalance:g}): hitting times are under-resolved",
                      GridResolutionWarning, stacklevel=3)
    s1_end = float(path.s1[-1])
    state = HedgeState(float(pi_g[-1]), float(pi0_g[-1]), float(last_t), float(paid),
                       bool(gp.tau < m1))
    return HedgeOutcome(
        kind=strategy_kind or cfg.kind, kappa=kappa, times=path.times, rebalance_times=reb,
        n_rebalances=n_g, stock=pi_g, bond=pi0_g, value=value, value_discounted=value_disc,
        reference=ref, z_path=z, remaining_variance=gp.sigma, gamma=gp.gamma, tau_index=gp.tau,
        terminal_shortfall=float(payoff.eval(s1_end)) - float(value[-1]),
        initial_price_charged=float(v0 * path.s0[0] + kappa * abs(delta[0]) * path.s1[0]),
        total_cost_paid=float(paid), trades=trades, final_state=state,
        steps_per_rebalance=float(steps_per), resolution_alarm=bool(alarm),
        bridge_depth_used=int(depth))


def run_continuous(path: PathGrid, payoff: Payoff, sigma_hat_sq) -> HedgeOutcome:
    """Conservative delta hedge at every grid point with Sigma_t = Sigma_hat - <log S~>_t, no costs.

    ``sigma_hat_sq`` may also be a StrategyConfig (its kappa is ignored).
    """
    payoff.require_nonvanishing_gamma()
    if isinstance(sigma_hat_sq, StrategyConfig):
        cfg = replace(sigma_hat_sq, kind="continuous", kappa=0.0)
    else:
        cfg = StrategyConfig(sigma_hat_sq=float(sigma_hat_sq), kind="continuous")
    tau = tau_index(path.qv, cfg.sigma_hat_sq)
    gp = greek_path(path, payoff, cfg.sigma_hat_sq - path.qv, tau)
    return _run(path, payoff, cfg, gp, 0)


def run_hitting_time(path: PathGrid, payoff: Payoff, cfg: StrategyConfig,
                     greeks_cache: GreekPath | None = None) -> HedgeOutcome:
    """Hitting-time rebalancing under proportional costs kappa.

    ``greeks_cache`` lets several runs on the same path (different kappa)
    share one greek computation; it must come from :func:`hitting_greeks`
    with the same payoff, sigma_hat_sq and alpha.
    """
    if cfg.kind != "hitting_time":
        raise ValueError("configuration kind must be 'hitting_time'")
    if not cfg.kappa > 0:
        raise DomainError("hitting-time strategy needs kappa > 0")
    payoff.require_nonvanishing_gamma()
    cfac = cfg.variance_factor(payoff)
    gp = greeks_cache if greeks_cache is not None else _prepare_hitting(path, payoff, cfg)
    bridge = cfg.detection == "bridge"
    return _run(path, payoff, cfg, gp, 1, depth=int(cfg.bridge_depth) if bridge else 0, cfac=cfac,
                use_prob=bridge)


def hitting_greeks(path: PathGrid, payoff: Payoff, cfg: StrategyConfig) -> GreekPath:
    """Greek path for the hitting-time strategy; reusable across kappa."""
    return _prepare_hitting(path, payoff, cfg)


def leland_variance(sigma: float, kappa: float, n: int, maturity: float = 1.0) -> float:
    """Enlarged variance sigma^2 + sigma kappa sqrt(n/T) sqrt(8/pi)."""
    return sigma ** 2 + sigma * math.sqrt(n / maturity) * kappa * math.sqrt(8.0 / math.pi)


def leland_greeks(path: PathGrid, payoff: Payoff, sigma: float, kappa: float, n: int,
                  maturity: float = 1.0) -> GreekPath:
    var = leland_variance(sigma, kappa, n, maturity)
    remaining = var * (maturity - path.times)
    m1 = path.times.shape[0]
    pos = remaining > maturity * var * TAU_RTOL
    tau = int(np.argmin(pos)) if not pos.all() else m1
    gp = greek_path(path, payoff, remaining, tau)
    if tau < m1:
        # at maturity the target is the payoff itself
        price = gp.price.copy()
        price[tau:] = payoff.eval(path.s_tilde[tau:])
        gp = replace(gp, price=price)
    return gp


def run_leland(path: PathGrid, payoff: Payoff, sigma: float, kappa: float, n: int,
               maturity: float = 1.0, greeks_cache: GreekPath | None = None) -> HedgeOutcome:
    """Leland's strategy: rebalance at t_j = j T / n with the enlarged volatility.

    Restricted to Black-Scholes paths with zero rate and a convex payoff.
    Every rebalancing date inside the path horizon must be a grid point.
    """
    if not isinstance(path.model, BlackScholes):
        raise TypeError("Leland's strategy is defined for Black-Scholes paths")
    if path.model.rate != 0:
        raise DomainError("Leland comparison requires zero interest rate")
    if payoff.convexity == CONCAVE:
        raise ConditionViolation("Leland's strategy is implemented for convex payoffs")
    payoff.require_nonvanishing_gamma()
    n = int(n)
    dates = maturity * np.arange(n) / n
    dates = dates[dates <= path.horizon * (1 + 1e-12)]
    dt = path.horizon / path.steps
    idx = np.rint(dates / dt).astype(np.int64)
    if np.any(np.abs(idx * dt - dates) > 1e-9 * max(1.0, maturity)):
        raise DomainError("Leland rebalancing dates j T / n must fall on the grid; "
                          "choose steps as a multiple of n * horizon / T")
    mask = np.zeros(path.times.shape[0], np.bool_)
    mask[idx] = True
    var = leland_variance(sigma, kappa, n, maturity)
    gp = greeks_cache if greeks_cache is not None else leland_greeks(path, payoff, sigma, kappa, n, maturity)
    # the time-based budget is exhausted exactly at maturity: no switch trade
    cfg = StrategyConfig(sigma_hat_sq=var * maturity, alpha=1.0, kappa=kappa, kind="leland", n=n,
                         bridge_depth=0, charge_switch_cost=False)
    out = _run(path, payoff, cfg, replace(gp, tau=path.times.shape[0]) if gp.tau >= path.steps
               else gp, 2, mask=mask)
    return out
