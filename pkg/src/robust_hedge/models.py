"""Stock/bond path simulation on a time grid.

Three model families share one interface:

* ``BlackScholes``       constant volatility
* ``TimeDependentVol``   deterministic sigma(t)
* ``StochVol``           mean-reverting square-root variance correlated with the stock

Every path carries the model's quadratic variation of log(S1/S0) on the
grid, which is what the hedging strategies consume.  Each path is driven by
its own Philox stream keyed by ``path_seed(master_seed, index)`` so results
do not depend on how paths are scheduled across workers.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DomainError


def path_seed(master_seed: int, index: int) -> int:
    """Deterministic 64-bit seed for path ``index`` of a run."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def refine_seed(master_seed: int, index: int) -> int:
    """Seed for the bridge refinement of path ``index``; independent of path_seed."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index), 1))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


@dataclass(frozen=True)
class BlackScholes:
    sigma: float
    rate: float = 0.0
    spot: float = 100.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if not self.spot > 0:
            raise DomainError("spot must be positive")


@dataclass(frozen=True)
class TimeDependentVol:
    """sigma(t) given either as a callable or as (t, sigma) knots (linear interpolation, flat ends)."""

    sigma: Union[Callable[[np.ndarray], np.ndarray], Sequence[Sequence[float]]]
    rate: float = 0.0
    spot: float = 100.0

    def __post_init__(self):
        if not self.spot > 0:
            raise DomainError("spot must be positive")
        if not callable(self.sigma):
            knots = np.asarray(self.sigma, dtype=float)
            if knots.ndim != 2 or knots.shape[1] != 2 or knots.shape[0] < 1:
                raise DomainError("sigma knots must be a list of (t, sigma) pairs")
            if np.any(np.diff(knots[:, 0]) <= 0) or np.any(knots[:, 1] <= 0):
                raise DomainError("sigma knots need increasing times and positive values")
            object.__setattr__(self, "sigma", tuple(map(tuple, knots.tolist())))

    def sigma_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if callable(self.sigma):
            out = np.broadcast_to(np.asarray(self.sigma(t), dtype=float), t.shape)
        else:
            k = np.asarray(self.sigma)
            out = np.interp(t, k[:, 0], k[:, 1])
        if np.any(~(out > 0)):
            raise DomainError("sigma(t) must stay positive")
        return out


@dataclass(frozen=True)
class StochVol:
    """dv = mean_reversion (long_run_var - v) dt + vol_of_vol sqrt(v) dW2, d<W1, W2> = correlation dt."""

    v0: float
    mean_reversion: float
    long_run_var: float
    vol_of_vol: float
    correlation: float = 0.0
    rate: float = 0.0
    spot: float = 100.0

    def __post_init__(self):
        if not self.v0 > 0 or self.long_run_var < 0 or self.vol_of_vol < 0 or self.mean_reversion < 0:
            raise DomainError("stochastic-vol parameters must be non-negative (v0 > 0)")
        if not -1.0 <= self.correlation <= 1.0:
            raise DomainError("correlation must lie in [-1, 1]")
        if not self.spot > 0:
            raise DomainError("spot must be positive")


ModelSpec = Union[BlackScholes, TimeDependentVol, StochVol]


@dataclass(frozen=True)
class PathGrid:
    """One simulated path.

    ``s_tilde = s1 / s0`` and ``qv[k]`` is the quadratic variation of
    log(s_tilde) accumulated up to ``times[k]``.
    """

    times: np.ndarray
    s1: np.ndarray
    s0: np.ndarray
    s_tilde: np.ndarray
    qv: np.ndarray
    seed: int
    model: ModelSpec = field(repr=False)
    variance: np.ndarray = field(default=None, repr=False)  # spot variance on each interval

    @property
    def steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def bridgeable(self) -> bool:
        """Whether the Brownian-bridge law between grid points is exact for this model."""
        return isinstance(self.model, (BlackScholes, TimeDependentVol))


def _time_grid(horizon: float, steps: int) -> np.ndarray:
    if not (horizon > 0 and np.isfinite(horizon)):
        raise DomainError("horizon must be positive")
    if int(steps) < 1:
        raise DomainError("steps must be >= 1")
    t = horizon * np.arange(steps + 1) / steps
    t[-1] = horizon
    return t


def _interval_variance(model: ModelSpec, times: np.ndarray, z2=None) -> np.ndarray:
    if isinstance(model, BlackScholes):
        return np.full(times.shape[0] - 1, model.sigma ** 2)
    if isinstance(model, TimeDependentVol):
        # average of sigma^2 over each interval (Simpson; exact for linear knots squared)
        a, b = times[:-1], times[1:]
        m = 0.5 * (a + b)
        sa, sm, sb = (model.sigma_at(x) ** 2 for x in (a, m, b))
        return (sa + 4 * sm + sb) / 6.0
    raise TypeError(type(model))


def simulate_path(model: ModelSpec, horizon: float, steps: int, seed: int) -> PathGrid:
    """Simulate one path on the uniform grid t_k = horizon * k / steps.

    The stock's first Brownian increment is drawn first in every model, so
    the stochastic-vol model with vol_of_vol = 0 reproduces the
    time-dependent path exactly (same seed, same z1).
    """
    times = _time_grid(horizon, steps)
    dt = np.diff(times)
    rng = _rng(seed)
    z1 = rng.standard_normal(steps)
    if isinstance(model, StochVol):
        z2 = rng.standard_normal(steps)
        v = _sv_variance(model, dt, z1, z2)
    else:
        v = _interval_variance(model, times)
    dqv = v * dt
    x = np.concatenate([[0.0], np.cumsum(np.sqrt(dqv) * z1 - 0.5 * dqv)])
    if isinstance(model, BlackScholes):
        qv = model.sigma ** 2 * times
    else:
        qv = np.concatenate([[0.0], np.cumsum(dqv)])
    s0 = np.exp(model.rate * times)
    s_tilde = model.spot * np.exp(x)
    s1 = s_tilde * s0
    return PathGrid(times, s1, s0, s1 / s0, qv, int(seed), model, v)


def _sv_variance(m: StochVol, dt, z1, z2) -> np.ndarray:
    """Spot variance held on each interval.

    Mean reversion is integrated exactly over the step
    (v -> theta + (v - theta) e^{-k dt}) and the diffusion part by Euler with
    full truncation.  With vol_of_vol = 0 this is the exact deterministic
    variance path, averaged over the interval.
    """
    n = dt.shape[0]
    out = np.empty(n)
    rho = m.correlation
    w2 = rho * z1 + math.sqrt(max(0.0, 1.0 - rho * rho)) * z2
    v = m.v0
    k, th, xi = m.mean_reversion, m.long_run_var, m.vol_of_vol
    for i in range(n):
        h = dt[i]
        vp = max(v, 0.0)
        e = math.exp(-k * h)
        # interval average of the deterministic flow from v
        avg = th + (vp - th) * ((1.0 - e) / (k * h) if k * h > 1e-12 else 1.0 - 0.5 * k * h)
        out[i] = max(avg, 0.0)
        v = th + (v - th) * e + xi * math.sqrt(vp * h) * w2[i]
    return out


def refine_grid(path: PathGrid, factor: int, seed: int) -> PathGrid:
    """Insert ``factor - 1`` Brownian-bridge points into every interval.

    The bridge runs in the quadratic-variation clock, in which log(s_tilde)
    is a Brownian motion with drift -1/2; conditioned on both endpoints the
    drift drops out.  Only models with deterministic variance are supported.
    """
    factor = int(factor)
    if factor < 1:
        raise DomainError("refinement factor must be >= 1")
    if not path.bridgeable:
        raise TypeError("bridge refinement needs a model with deterministic variance")
    if factor == 1:
        return path
    m = path.steps
    frac = np.arange(factor + 1) / factor
    times = (path.times[:-1, None] + np.diff(path.times)[:, None] * frac[None, :])
    qv = (path.qv[:-1, None] + np.diff(path.qv)[:, None] * frac[None, :])
    x = np.log(path.s_tilde)
    rng = _rng(seed)
    # sequential bridge: walk from the left end, conditioning on the right end
    xs = np.empty((m, factor + 1))
    xs[:, 0] = x[:-1]
    xs[:, -1] = x[1:]
    z = rng.standard_normal((m, factor - 1))
    for j in range(1, factor):
        q_prev, q_cur, q_end = qv[:, j - 1], qv[:, j], qv[:, -1]
        span = q_end - q_prev
        mean = xs[:, j - 1] + (xs[:, -1] - xs[:, j - 1]) * (q_cur - q_prev) / span
        var = (q_cur - q_prev) * (q_end - q_cur) / span
        xs[:, j] = mean + np.sqrt(np.maximum(var, 0.0)) * z[:, j - 1]

    def flat(a):
        return np.concatenate([a[:, :-1].ravel(), a[-1:, -1]])

    t = flat(times)
    t[-1] = path.times[-1]
    q = flat(qv)
    q[0], q[-1] = path.qv[0], path.qv[-1]
    st = np.exp(flat(xs))
    st[::factor] = path.s_tilde
    s0 = np.exp(path.model.rate * t)
    v = np.repeat(path.variance, factor) if path.variance is not None else None
    return PathGrid(t, st * s0, s0, st, q, int(seed), path.model, v)


def write_path_csv(path: PathGrid, file) -> None:
    """Dump times, s1, s0, s_tilde, qv at 17 significant digits."""
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    fh = open(file, "w", newline="") if own else file
    try:
        w = csv.writer(fh)
        w.writerow(["t", "s1", "s0", "s_tilde", "qv"])
        for row in zip(path.times, path.s1, path.s0, path.s_tilde, path.qv):
            w.writerow([f"{v:.17g}" for v in row])
    finally:
        if own:
            fh.close()
