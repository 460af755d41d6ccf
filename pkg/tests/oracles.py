"""Independent reference formulas (scipy only, no package code)."""
import math

import numpy as np
from scipy.stats import norm


def bs_call(S, R, Sig, K):
    """Price, delta, gamma of a call with total variance Sig and log-interest R."""
    S, R, Sig = np.broadcast_arrays(*(np.asarray(a, float) for a in (S, R, Sig)))
    sq = np.sqrt(Sig)
    d1 = (np.log(S / K) + R) / sq + 0.5 * sq
    d2 = d1 - sq
    price = S * norm.cdf(d1) - K * np.exp(-R) * norm.cdf(d2)
    return price, norm.cdf(d1), norm.pdf(d1) / (S * sq)


def bs_put(S, R, Sig, K):
    S, R, Sig = np.broadcast_arrays(*(np.asarray(a, float) for a in (S, R, Sig)))
    sq = np.sqrt(Sig)
    d1 = (np.log(S / K) + R) / sq + 0.5 * sq
    d2 = d1 - sq
    price = K * np.exp(-R) * norm.cdf(-d2) - S * norm.cdf(-d1)
    return price, norm.cdf(d1) - 1.0, norm.pdf(d1) / (S * sq)


def power(S, R, Sig, p, c=1.0):
    """c s^p: P = c S^p exp((p-1) R + p(p-1) Sig / 2)."""
    return c * S ** p * np.exp((p - 1) * R + 0.5 * p * (p - 1) * Sig)


def beta(x):
    return x * x / 2 + math.sqrt(2 / math.pi) * x + 1 - 2 / math.pi


def beta_hat(x):
    return math.pi * x * x / 12 + math.sqrt(2 * math.pi) / 3 * x + 2 / 3
