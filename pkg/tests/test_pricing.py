import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from robust_hedge import DomainError, NumericFailure, Payoff, PricingInputs, greeks, pde_residuals, price
from robust_hedge.pricing import discounted_price

S = np.linspace(50, 150, 5)
R = np.linspace(-0.1, 0.1, 5)
SIG = np.linspace(0.01, 0.25, 5)
GRID = np.meshgrid(S, R, SIG, indexing="ij")


def test_reference_call_value():
    # d1 = 0.1, price = 100 (2 Phi(0.1) - 1)
    assert price(Payoff.call(100), 100, 0, 0.04) == pytest.approx(7.965567455405804, rel=1e-12)


@pytest.mark.parametrize("method", ["closed", "quadrature"])
def test_call_matches_oracle(method):
    g = greeks(Payoff.call(100), *GRID, method=method)
    p, d, gm = oracles.bs_call(*GRID, 100.0)
    assert np.allclose(g.price, p, rtol=1e-8, atol=1e-12)
    assert np.allclose(g.delta, d, rtol=1e-8, atol=1e-12)
    assert np.allclose(g.gamma, gm, rtol=1e-8, atol=1e-14)


@pytest.mark.parametrize("method", ["closed", "quadrature"])
def test_put_matches_oracle(method):
    g = greeks(Payoff.put(100), *GRID, method=method)
    p, d, gm = oracles.bs_put(*GRID, 100.0)
    assert np.allclose(g.price, p, rtol=1e-8, atol=1e-12)
    assert np.allclose(g.delta, d, rtol=1e-8, atol=1e-12)
    assert np.allclose(g.gamma, gm, rtol=1e-8, atol=1e-14)


@pytest.mark.parametrize("p", [2.0, 3.0, 0.5])
def test_power_payoff_oracle(p):
    f = Payoff.smooth(f"s**{p}/100")
    got = price(f, *GRID)
    want = oracles.power(*GRID, p, 0.01)
    assert np.allclose(got, want, rtol=1e-9)
    g = greeks(f, *GRID)
    s, r, sig = GRID
    assert np.allclose(g.delta, p * want / s, rtol=1e-8)
    assert np.allclose(g.gamma, p * (p - 1) * want / s ** 2, rtol=1e-7, atol=1e-12)


@pytest.mark.parametrize("payoff", [Payoff.call(100), Payoff.put(100), Payoff.smooth("sqrt((s-100)**2 + 100)"),
                                    Payoff.piecewise_linear([80, 120], [0.5, 2.0], 3.0, -0.2)])
@pytest.mark.parametrize("method", ["auto", "quadrature"])
def test_pde_residuals(payoff, method):
    res = pde_residuals(payoff, *GRID, method=method)
    P = price(payoff, *GRID, method=method)
    tol = 1e-5 * np.maximum(1.0, np.abs(P))
    for r in (res.r1, res.r2, res.r3, res.r4):
        assert np.all(np.abs(r) <= tol)


def test_boundary_condition():
    for f in (Payoff.call(100), Payoff.put(100), Payoff.smooth("s**2/100")):
        s = np.array([50.0, 100.0, 150.0])
        assert np.allclose(price(f, s, 0.0, 0.0), f(s))


def test_put_call_parity():
    c = price(Payoff.call(100), *GRID, method="quadrature")
    p = price(Payoff.put(100), *GRID, method="quadrature")
    s, r, _ = GRID
    assert np.max(np.abs(c - p - (s - 100 * np.exp(-r)))) < 1e-10
    c = price(Payoff.call(100), *GRID)
    p = price(Payoff.put(100), *GRID)
    assert np.max(np.abs(c - p - (s - 100 * np.exp(-r)))) < 1e-12


def test_discounted_form():
    # bond paying 1 at maturity: S0 = e^{-R}, and P(S1, R, Sigma) / S0 = F(S1 / S0, Sigma)
    f = Payoff.call(100)
    r = 0.05
    s0 = np.exp(-r)
    s1 = 104.0
    lhs = price(f, s1, r, 0.04) / s0
    assert lhs == pytest.approx(discounted_price(f, s1 / s0, 0.04), rel=1e-12)


def test_pricing_inputs_and_scalars():
    g = greeks(Payoff.call(100), PricingInputs(100.0, 0.0, 0.04))
    assert isinstance(g.price, float)
    assert g.to_dict()["price"] == pytest.approx(7.965567455405804)


def test_domain_errors():
    with pytest.raises(DomainError):
        price(Payoff.call(100), -1.0, 0, 0.04)
    with pytest.raises(DomainError):
        price(Payoff.call(100), 100, 0, -0.01)
    with pytest.raises(DomainError):
        pde_residuals(Payoff.call(100), 100, 0, 0.0)


def test_greeks_nan_at_zero_variance():
    g = greeks(Payoff.call(100), 120.0, 0.0, 0.0)
    assert g.price == pytest.approx(20.0)
    assert np.isnan(g.delta) and np.isnan(g.gamma)


def test_quadrature_failure_is_reported():
    # a payoff that is numerically a kink at scale 1e-6 cannot converge with a tiny panel budget
    f = Payoff.smooth("sqrt((s-100)**2 + 1e-12)")
    import robust_hedge.pricing as pr
    old = pr.MAX_PANELS
    pr.MAX_PANELS = 4
    try:
        with pytest.raises(NumericFailure):
            greeks(f, 100.0, 0.0, 0.04, order=20)
    finally:
        pr.MAX_PANELS = old


def test_closed_method_rejects_smooth():
    with pytest.raises(ValueError):
        price(Payoff.smooth("s**2"), 100, 0, 0.04, method="closed")


@settings(max_examples=60, deadline=None)
@given(st.floats(20, 300), st.floats(-0.2, 0.2), st.floats(1e-3, 0.5), st.floats(50, 150))
def test_convexity_and_domination(s, r, sig, k):
    f = Payoff.call(k)
    g = greeks(f, s, r, sig)
    assert g.gamma >= 0
    # P(S, 0, Sigma) >= f(S) for convex f (Jensen)
    assert price(f, s, 0.0, sig) >= f(s) - 1e-12
    assert 0 <= g.delta <= 1
    # concave payoff: gamma <= 0 and P(S,0,Sigma) <= f(S)
    h = -f
    assert greeks(h, s, r, sig).gamma <= 0
    assert price(h, s, 0.0, sig) <= h(s) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(20, 300), st.floats(1e-3, 0.5))
def test_price_monotone_in_variance(s, sig):
    f = Payoff.put(100)
    assert price(f, s, 0.0, sig * 1.1) >= price(f, s, 0.0, sig) - 1e-12
