"""Pricing function P(S, R, Sigma) and its sensitivities.

    P(S, R, Sigma) = e^{-R} E[ f(S exp(R - Sigma/2 + sqrt(Sigma) Z)) ],  Z ~ N(0, 1)

R is the remaining cumulative log-interest and Sigma the remaining
cumulative variance.  Piecewise-linear payoffs are priced in closed form
(weighted calls); everything else goes through Gaussian quadrature.

The quadrature greeks deliberately use different integrands so that the
PDE identities

    dP/dSigma = S^2 P_SS / 2,   P_R = S P_S - P,
    P_RS = S P_SS,              P_RR = S^2 P_SS - P_R

are genuine checks rather than algebraic tautologies:

    delta      likelihood ratio on f          E[f z] / (S sqrt(Sigma))
    gamma      pathwise, then likelihood      E[f'(X) X (z/sqrt(Sigma) - 1)] / S^2
    dP/dSigma  second-order likelihood ratio  E[f ((z^2-1)/(2 Sigma) - z/(2 sqrt(Sigma)))]
    dP/dR      pathwise                       E[f'(X) X] - P
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numba as nb
import numpy as np

from .errors import DomainError, NumericFailure
from .payoffs import Payoff

SQRT2 = math.sqrt(2.0)
INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

DEFAULT_ORDER = 200
RTOL = 1e-8
ATOL = 1e-10
_CHUNK = 1 << 21  # quadrature nodes per vectorized block


# ---------------------------------------------------------------------------
# closed form (numba; also called from the hedge kernel)
# ---------------------------------------------------------------------------
@nb.njit(cache=True)
def ncdf(x):
    return 0.5 * math.erfc(-x / SQRT2)


@nb.njit(cache=True)
def npdf(x):
    return INV_SQRT2PI * math.exp(-0.5 * x * x)


@nb.njit(cache=True)
def pl_greeks(S, R, Sig, A, B, strikes, weights):
    """Closed-form (price, delta, gamma, dP/dSigma, dP/dR) for a weighted sum of calls.

    At Sig == 0 only the price is defined; the sensitivities come back NaN.
    """
    disc = math.exp(-R)
    price = A * disc + B * S
    if Sig <= 0.0:
        fwd = S / disc
        f = A + B * fwd
        for i in range(strikes.shape[0]):
            if fwd > strikes[i]:
                f += weights[i] * (fwd - strikes[i])
        return disc * f, np.nan, np.nan, np.nan, np.nan
    sq = math.sqrt(Sig)
    delta = B
    gamma = 0.0
    dsig = 0.0
    dr = -A * disc
    for i in range(strikes.shape[0]):
        k = strikes[i]
        w = weights[i]
        d1 = (math.log(S / k) + R + 0.5 * Sig) / sq
        d2 = d1 - sq
        n1 = ncdf(d1)
        n2 = ncdf(d2)
        p1 = npdf(d1)
        price += w * (S * n1 - k * disc * n2)
        delta += w * n1
        gamma += w * p1 / (S * sq)
        dsig += w * S * p1 / (2.0 * sq)
        dr += w * k * disc * n2
    return price, delta, gamma, dsig, dr


@nb.njit(cache=True, error_model="numpy")
def pl_delta_gamma(x, Sig, B, strikes, weights):
    """Delta and gamma of the discounted price F(x, Sig) = P(x, 0, Sig); Sig > 0."""
    sq = math.sqrt(Sig)
    delta = B
    gamma = 0.0
    for i in range(strikes.shape[0]):
        d1 = (math.log(x / strikes[i]) + 0.5 * Sig) / sq
        delta += weights[i] * ncdf(d1)
        gamma += weights[i] * npdf(d1) / (x * sq)
    return delta, gamma


@nb.njit(cache=True, nogil=True)
def _pl_greeks_array(S, R, Sig, A, B, strikes, weights, out):
    for j in range(S.shape[0]):
        p, d, g, ds, dr = pl_greeks(S[j], R[j], Sig[j], A, B, strikes, weights)
        out[0, j] = p
        out[1, j] = d
        out[2, j] = g
        out[3, j] = ds
        out[4, j] = dr


# ---------------------------------------------------------------------------
# public types
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PricingInputs:
    """Spot S > 0, remaining log-interest R, remaining variance Sigma >= 0."""

    S: float
    R: float = 0.0
    Sigma: float = 0.0


@dataclass(frozen=True)
class GreekSet:
    price: np.ndarray | float
    delta: np.ndarray | float
    gamma: np.ndarray | float
    dP_dSigma: np.ndarray | float
    dP_dR: np.ndarray | float

    def to_dict(self) -> dict:
        return {k: _jsonable(v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class PDEResiduals:
    """r1 = P_Sigma - S^2 P_SS/2, r2 = P_R - S P_S + P, r3 = P_RS - S P_SS, r4 = P_RR - S^2 P_SS + P_R."""

    r1: np.ndarray | float
    r2: np.ndarray | float
    r3: np.ndarray | float
    r4: np.ndarray | float

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(v)) for v in (self.r1, self.r2, self.r3, self.r4)))

    def to_dict(self) -> dict:
        return {k: _jsonable(v) for k, v in asdict(self).items()}


def _jsonable(v):
    a = np.asarray(v)
    return float(a) if a.ndim == 0 else a.tolist()


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------
PANEL_NODES = 20
MAX_PANELS = 2048


def _node_table(payoff: Payoff, S, R, Sig, order):
    """Nodes z and weights (density included) per point, shape (n, m).

    Kinked payoffs: one Gauss-Legendre rule of ``order`` nodes between
    consecutive kink images.  Smooth payoffs: ``order // PANEL_NODES``
    equal panels on the truncated line.
    """
    sq = np.sqrt(Sig)
    L = 15.0 + payoff.growth_exponent * sq
    if payoff.kind == "smooth":
        panels = max(1, order // PANEL_NODES)
        frac = np.linspace(0.0, 1.0, panels + 1)
        edges = -L[:, None] + 2.0 * L[:, None] * frac[None, :]
        order = PANEL_NODES
    else:
        ks = payoff.kink_points
        # kink images in z-space; the integrand is smooth between them
        zk = (np.log(ks[None, :] / S[:, None]) - R[:, None] + 0.5 * Sig[:, None]) / sq[:, None]
        zk = np.clip(zk, -L[:, None], L[:, None])
        edges = np.sort(np.concatenate([-L[:, None], zk, L[:, None]], axis=1), axis=1)
    lo, hi = edges[:, :-1], edges[:, 1:]
    xi, wl = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    z = mid[:, :, None] + half[:, :, None] * xi[None, None, :]
    w = half[:, :, None] * wl[None, None, :] * INV_SQRT2PI * np.exp(-0.5 * z * z)
    n = S.shape[0]
    return z.reshape(n, -1), w.reshape(n, -1)


def _quad_block(payoff: Payoff, S, R, Sig, order):
    z, w = _node_table(payoff, S, R, Sig, order)
    sq = np.sqrt(Sig)[:, None]
    Sc = S[:, None]
    X = Sc * np.exp(R[:, None] - 0.5 * Sig[:, None] + sq * z)
    fX = payoff._eval(X)
    dX = payoff._deriv(X)
    A = B = 0.0
    if payoff.is_piecewise_linear:
        # subtract the linear piece through the forward and price it exactly:
        # the remainder vanishes where the mass sits, so tiny greeks keep their
        # relative accuracy instead of drowning in O(1) cancellation
        fwd = S * np.exp(R)
        B = payoff._deriv(fwd)
        A = payoff._eval(fwd) - B * fwd
        fX = fX - A[:, None] - B[:, None] * X
        dX = dX - B[:, None]
    gX = dX * X
    disc = np.exp(-R)
    price = disc * np.sum(w * fX, axis=1)
    delta = disc * np.sum(w * fX * z, axis=1) / (S * sq[:, 0])
    gamma = disc * np.sum(w * gX * (z / sq - 1.0), axis=1) / (S * S)
    dsig = disc * np.sum(w * fX * ((z * z - 1.0) / (2.0 * Sig[:, None]) - z / (2.0 * sq)), axis=1)
    dr = disc * np.sum(w * gX, axis=1) - price
    return np.stack([price + A * disc + B * S, delta + B, gamma, dsig, dr - A * disc])


def _converged(hi, lo, S):
    scale = np.maximum(1.0, np.abs(hi[0]))
    units = np.stack([scale, scale / S, scale / S ** 2, scale, scale])
    err = np.abs(hi - lo)
    return err <= ATOL + RTOL * units, err


def _quadrature(payoff: Payoff, S, R, Sig, order, check):
    smooth = payoff.kind == "smooth"
    out = np.empty((5, S.shape[0]))
    i = 0
    while i < S.shape[0]:
        cur = order
        per_point = 2 * cur if smooth else cur * (len(payoff.knots) + 1)
        sl = slice(i, i + max(1, _CHUNK // per_point))
        hi = _quad_block(payoff, S[sl], R[sl], Sig[sl], cur)
        if check:
            while True:
                # smooth payoffs: halve the panel width until stable
                if smooth:
                    lo, hi = hi, _quad_block(payoff, S[sl], R[sl], Sig[sl], 2 * cur)
                    cur *= 2
                else:
                    lo = _quad_block(payoff, S[sl], R[sl], Sig[sl], max(16, cur // 2))
                ok, err = _converged(hi, lo, S[sl])
                if ok.all():
                    break
                if not smooth or cur // PANEL_NODES > MAX_PANELS:
                    j = int(np.argwhere(~ok)[0, 1]) + i
                    raise NumericFailure(
                        f"quadrature did not converge at S={S[j]:.6g}, R={R[j]:.6g}, "
                        f"Sigma={Sig[j]:.6g} (max discrepancy {float(err.max()):.3g})")
        out[:, sl] = hi
        i = sl.stop
    return out


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------
def _prepare(S, R, Sigma):
    if isinstance(S, PricingInputs):
        S, R, Sigma = S.S, S.R, S.Sigma
    S, R, Sig = np.broadcast_arrays(np.asarray(S, float), np.asarray(R, float), np.asarray(Sigma, float))
    shape = S.shape
    S, R, Sig = (np.ascontiguousarray(a).ravel() for a in (S, R, Sig))
    if np.any(~(S > 0)):
        raise DomainError("spot S must be strictly positive")
    if np.any(~(Sig >= 0)):
        raise DomainError("remaining variance Sigma must be non-negative")
    if np.any(~np.isfinite(R)):
        raise DomainError("log-interest R must be finite")
    return S, R, Sig, shape


def _resolve_method(payoff: Payoff, method: str) -> str:
    if method == "auto":
        return "closed" if payoff.is_piecewise_linear else "quadrature"
    if method == "closed" and not payoff.is_piecewise_linear:
        raise ValueError("closed form is only available for piecewise-linear payoffs")
    if method not in ("closed", "quadrature"):
        raise ValueError(f"unknown pricing method {method!r}")
    return method


def _all_greeks(payoff, S, R, Sig, method, order, check):
    out = np.full((5, S.shape[0]), np.nan)
    pos = Sig > 0
    zero = ~pos
    if np.any(zero):
        out[0, zero] = np.exp(-R[zero]) * payoff._eval(S[zero] * np.exp(R[zero]))
    if np.any(pos):
        if _resolve_method(payoff, method) == "closed":
            A, B, ks, ws = payoff.canonical_arrays()
            blk = np.empty((5, int(pos.sum())))
            _pl_greeks_array(S[pos], R[pos], Sig[pos], A, B, ks, ws, blk)
        else:
            blk = _quadrature(payoff, S[pos], R[pos], Sig[pos], order, check)
        out[:, pos] = blk
    return out


def _shape_out(a, shape):
    return float(a[0]) if shape == () else a.reshape(shape)


def greeks(payoff: Payoff, S, R=0.0, Sigma=0.0, *, method: str = "auto",
           order: int = DEFAULT_ORDER, check: bool = True) -> GreekSet:
    """Price and sensitivities at (S, R, Sigma); inputs broadcast.

    Sensitivities are NaN where Sigma == 0 (only the price is defined there).
    Raises NumericFailure if the quadrature does not agree with a half-order
    rule to rtol 1e-8.
    """
    S, R, Sig, shape = _prepare(S, R, Sigma)
    out = _all_greeks(payoff, S, R, Sig, method, order, check)
    return GreekSet(*(_shape_out(out[i], shape) for i in range(5)))


def price(payoff: Payoff, S, R=0.0, Sigma=0.0, *, method: str = "auto",
          order: int = DEFAULT_ORDER, check: bool = True):
    """P(S, R, Sigma).  P(S, 0, 0) = f(S)."""
    return greeks(payoff, S, R, Sigma, method=method, order=order, check=check).price


def discounted_price(payoff: Payoff, x, Sigma, **kw):
    """F(x, Sigma) = P(x, 0, Sigma), the price in units of the bond."""
    return price(payoff, x, 0.0, Sigma, **kw)


def pde_residuals(payoff: Payoff, S, R=0.0, Sigma=0.01, *, h: float = 1e-3,
                  method: str = "auto", order: int = DEFAULT_ORDER) -> PDEResiduals:
    """The four PDE residuals.

    The R-derivatives of delta and dP/dR use the fourth-order central
    stencil with step h.
    """
    S, R, Sig, shape = _prepare(S, R, Sigma)
    if np.any(Sig <= 0):
        raise DomainError("PDE residuals need Sigma > 0")
    g = {k: _all_greeks(payoff, S, R + k * h, Sig, method, order, True) for k in (-2, -1, 0, 1, 2)}
    P, D, G, DS, DR = g[0]

    def d_dR(i):
        return (8.0 * (g[1][i] - g[-1][i]) - (g[2][i] - g[-2][i])) / (12.0 * h)

    r1 = DS - 0.5 * S * S * G
    r2 = DR - S * D + P
    r3 = d_dR(1) - S * G
    r4 = d_dR(4) - (S * S * G - DR)
    return PDEResiduals(*(_shape_out(r, shape) for r in (r1, r2, r3, r4)))
