"""European payoff functions and their derivative data.

Piecewise-linear payoffs are stored in the canonical form

    f(s) = A + B s + sum_i w_i (s - k_i)^+

which makes convexity a sign condition on the weights and gives the
pricing kernel a closed form (a weighted sum of calls).  Smooth payoffs
are given as a sympy expression in ``s``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConditionViolation, DomainError

CONVEX = "convex"
CONCAVE = "concave"
KINDS = ("call", "put", "piecewise_linear", "smooth")


@lru_cache(maxsize=64)
def _compile_expr(expr: str):
    import sympy

    s = sympy.Symbol("s", positive=True)
    e = sympy.sympify(expr, locals={"s": s})
    if e.free_symbols - {s}:
        raise ValueError(f"payoff expression may only depend on s, got {sorted(map(str, e.free_symbols))}")
    d1 = sympy.diff(e, s)
    d2 = sympy.diff(d1, s)
    fns = tuple(sympy.lambdify(s, x, modules="numpy") for x in (e, d1, d2))
    return fns


def _vectorize(fn, s):
    out = fn(s)
    return np.broadcast_to(np.asarray(out, dtype=float), np.shape(s)).copy()


@dataclass(frozen=True)
class Payoff:
    """A convex or concave European payoff f: (0, inf) -> R.

    Use the constructors :meth:`call`, :meth:`put`, :meth:`piecewise_linear`
    and :meth:`smooth` rather than the raw initializer.
    """

    kind: str
    convexity: str
    growth_exponent: float = 1.0
    intercept: float = 0.0
    slope: float = 0.0
    knots: tuple = ()
    weights: tuple = ()
    expr: str | None = None
    scale: float = 1.0
    strike: float | None = field(default=None, compare=False)

    # ---- constructors -------------------------------------------------
    @classmethod
    def call(cls, strike: float) -> "Payoff":
        _check_strike(strike)
        return cls("call", CONVEX, 1.0, 0.0, 0.0, (float(strike),), (1.0,), strike=float(strike))

    @classmethod
    def put(cls, strike: float) -> "Payoff":
        # (K - s)^+ = K - s + (s - K)^+
        _check_strike(strike)
        return cls("put", CONVEX, 1.0, float(strike), -1.0, (float(strike),), (1.0,), strike=float(strike))

    @classmethod
    def piecewise_linear(cls, knots: Sequence[float], weights: Sequence[float],
                         intercept: float = 0.0, slope: float = 0.0) -> "Payoff":
        """f(s) = intercept + slope*s + sum w_i (s - k_i)^+.

        All weights non-negative gives a convex payoff, all non-positive a
        concave one; mixed signs are rejected.
        """
        k = np.asarray(knots, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if k.shape != w.shape:
            raise ValueError("knots and weights must have the same length")
        if np.any(k <= 0) or not np.all(np.isfinite(k)):
            raise DomainError("knots must be finite and positive")
        order = np.argsort(k, kind="stable")
        k, w = k[order], w[order]
        if np.any(w > 0) and np.any(w < 0):
            raise ConditionViolation("piecewise-linear payoff must be convex (all weights >= 0) "
                                     "or concave (all weights <= 0)")
        convexity = CONCAVE if np.any(w < 0) else CONVEX
        return cls("piecewise_linear", convexity, 1.0, float(intercept), float(slope),
                   tuple(k.tolist()), tuple(w.tolist()))

    @classmethod
    def smooth(cls, expr: str, convexity: str | None = None,
               growth_exponent: float | None = None) -> "Payoff":
        """Smooth payoff from a sympy expression in ``s``, e.g. ``"s**2/100"``.

        Convexity and the polynomial growth exponent are detected numerically
        when not given.
        """
        f, d1, d2 = _compile_expr(expr)
        grid = np.geomspace(1e-2, 1e4, 2001)
        with np.errstate(all="ignore"):
            curv = _vectorize(d2, grid)
        curv = curv[np.isfinite(curv)]
        detected = None
        tol = 1e-12 * max(1.0, float(np.max(np.abs(curv)))) if curv.size else 0.0
        if curv.size and np.all(curv >= -tol):
            detected = CONVEX
        elif curv.size and np.all(curv <= tol):
            detected = CONCAVE
        if convexity is None:
            if detected is None:
                raise ConditionViolation(f"payoff {expr!r} is neither convex nor concave on (0.01, 1e4)")
            convexity = detected
        elif convexity not in (CONVEX, CONCAVE):
            raise ValueError(f"convexity must be {CONVEX!r} or {CONCAVE!r}")
        elif detected is not None and detected != convexity:
            raise ConditionViolation(f"payoff {expr!r} is {detected}, not {convexity}")
        if growth_exponent is None:
            s = 1e6
            with np.errstate(all="ignore"):
                fv = float(_vectorize(f, np.array(s)))
                dv = float(_vectorize(d1, np.array(s)))
            g = abs(s * dv / fv) if fv != 0 and np.isfinite(fv) and np.isfinite(dv) else 1.0
            growth_exponent = max(1.0, round(g, 2))
        return cls("smooth", convexity, float(growth_exponent), expr=str(expr))

    # ---- algebra ------------------------------------------------------
    def __neg__(self) -> "Payoff":
        flipped = CONCAVE if self.convexity == CONVEX else CONVEX
        if self.kind == "smooth":
            return Payoff("smooth", flipped, self.growth_exponent, expr=self.expr, scale=-self.scale)
        return Payoff("piecewise_linear", flipped, 1.0, -self.intercept, -self.slope, self.knots,
                      tuple(-w for w in self.weights))

    @property
    def side(self) -> int:
        """+1 for convex payoffs, -1 for concave."""
        return 1 if self.convexity == CONVEX else -1

    @property
    def is_piecewise_linear(self) -> bool:
        return self.kind != "smooth"

    @property
    def kink_points(self) -> np.ndarray:
        return np.asarray(self.knots, dtype=float)

    def canonical_arrays(self):
        """(A, B, strikes, weights) of the canonical piecewise-linear form."""
        if not self.is_piecewise_linear:
            raise TypeError("smooth payoffs have no piecewise-linear decomposition")
        return (self.intercept, self.slope, np.asarray(self.knots, dtype=float),
                np.asarray(self.weights, dtype=float))

    # ---- evaluation ---------------------------------------------------
    def __call__(self, s):
        return self.eval(s)

    def eval(self, s):
        s = _positive(s)
        return _scalar_or_array(self._eval(s), s)

    def _eval(self, s: np.ndarray) -> np.ndarray:
        if self.kind == "smooth":
            return self.scale * _vectorize(_compile_expr(self.expr)[0], s)
        out = self.intercept + self.slope * s
        for k, w in zip(self.knots, self.weights):
            out = out + w * np.maximum(s - k, 0.0)
        return out

    def _deriv(self, s: np.ndarray) -> np.ndarray:
        """Right derivative; equals f' away from the kinks."""
        if self.kind == "smooth":
            return self.scale * _vectorize(_compile_expr(self.expr)[1], s)
        out = np.full(np.shape(s), self.slope, dtype=float)
        for k, w in zip(self.knots, self.weights):
            out = out + w * (s >= k)
        return out

    def one_sided_derivatives(self, s):
        """Left and right derivatives (f'_-(s), f'_+(s))."""
        s = _positive(s)
        if self.kind == "smooth":
            d = self._deriv(s)
            return _scalar_or_array(d, s), _scalar_or_array(d.copy(), s)
        left = np.full(s.shape, self.slope, dtype=float)
        right = left.copy()
        for k, w in zip(self.knots, self.weights):
            left = left + w * (s > k)
            right = right + w * (s >= k)
        return _scalar_or_array(left, s), _scalar_or_array(right, s)

    def kink_selection(self, s):
        """Stock/bond holding (a, b) of the supporting line at s.

        a is the midpoint of the subdifferential [f'_-(s), f'_+(s)] and
        b = f(s) - a s, so a x + b <= f(x) for convex f (>= for concave).
        """
        left, right = self.one_sided_derivatives(s)
        a = 0.5 * (np.asarray(left) + np.asarray(right))
        b = np.asarray(self.eval(s)) - a * np.asarray(s, dtype=float)
        if np.ndim(a) == 0:
            return float(a), float(b)
        return a, b

    def has_nonvanishing_gamma(self) -> bool:
        """True unless f is affine (its second derivative vanishes identically)."""
        if self.kind == "smooth":
            grid = np.geomspace(1e-2, 1e4, 2001)
            with np.errstate(all="ignore"):
                c = _vectorize(_compile_expr(self.expr)[2], grid)
            return bool(np.any(np.abs(c[np.isfinite(c)]) > 0))
        return any(w != 0 for w in self.weights)

    def require_nonvanishing_gamma(self) -> None:
        if not self.has_nonvanishing_gamma():
            raise ConditionViolation("payoff is affine: its gamma vanishes identically, so the "
                                     "hedging error has no non-degenerate limit")

    def describe(self) -> dict:
        d = {"kind": self.kind, "convexity": self.convexity, "growth_exponent": self.growth_exponent}
        if self.kind in ("call", "put"):
            d["strike"] = self.strike
        elif self.kind == "piecewise_linear":
            d.update(intercept=self.intercept, slope=self.slope, knots=list(self.knots),
                     weights=list(self.weights))
        else:
            d.update(expr=self.expr, scale=self.scale)
        return d


def _check_strike(k):
    if not (np.isfinite(k) and k > 0):
        raise DomainError(f"strike must be finite and positive, got {k}")


def _positive(s) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("payoff argument must be strictly positive")
    return arr


def _scalar_or_array(out, s):
    out = np.asarray(out, dtype=float)
    return float(out) if np.ndim(s) == 0 else out
