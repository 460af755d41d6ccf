import numpy as np
import pytest
from hypothesis import given, strategies as st

from robust_hedge import ConditionViolation, DomainError, Payoff


def test_call_put_values():
    c, p = Payoff.call(100), Payoff.put(100)
    s = np.array([50.0, 100.0, 150.0])
    assert np.allclose(c(s), [0, 0, 50])
    assert np.allclose(p(s), [50, 0, 0])
    assert c.convexity == p.convexity == "convex"


def test_one_sided_derivatives_at_kink():
    c = Payoff.call(100)
    assert c.one_sided_derivatives(100.0) == (0.0, 1.0)
    assert c.one_sided_derivatives(90.0) == (0.0, 0.0)
    left, right = Payoff.put(100).one_sided_derivatives(100.0)
    assert (left, right) == (-1.0, 0.0)


def test_kink_selection_is_supporting_line():
    c = Payoff.call(100)
    a, b = c.kink_selection(100.0)
    assert a == 0.5 and b == pytest.approx(-50.0)
    xs = np.linspace(1, 300, 500)
    assert np.all(a * xs + b <= c(xs) + 1e-12)


def test_kink_selection_concave_dominates():
    f = -Payoff.call(100)
    a, b = f.kink_selection(120.0)
    xs = np.linspace(1, 300, 500)
    assert np.all(a * xs + b >= f(xs) - 1e-12)


def test_negation_flips_convexity():
    c = Payoff.call(100)
    assert (-c).convexity == "concave"
    assert (-(-c)).convexity == "convex"
    assert np.allclose((-c)(np.array([150.0])), [-50.0])
    s = Payoff.smooth("s**2/100")
    assert (-s).convexity == "concave"
    assert (-s)(10.0) == pytest.approx(-1.0)


def test_nonpositive_argument_raises():
    with pytest.raises(DomainError):
        Payoff.call(100)(0.0)
    with pytest.raises(DomainError):
        Payoff.call(100)(np.array([1.0, -1.0]))


def test_mixed_weights_rejected():
    with pytest.raises(ConditionViolation):
        Payoff.piecewise_linear([90, 110], [1, -1])


def test_affine_payoff_violates_condition():
    f = Payoff.piecewise_linear([], [], 0.0, 1.0)
    assert not f.has_nonvanishing_gamma()
    with pytest.raises(ConditionViolation):
        f.require_nonvanishing_gamma()


def test_smooth_detection():
    f = Payoff.smooth("sqrt((s-100)**2 + 100)")
    assert f.convexity == "convex"
    assert f.growth_exponent == pytest.approx(1.0)
    assert Payoff.smooth("s**2/100").growth_exponent == pytest.approx(2.0)
    assert Payoff.smooth("log(s)").convexity == "concave"
    with pytest.raises(ConditionViolation):
        Payoff.smooth("sin(s)")
    with pytest.raises(ConditionViolation):
        Payoff.smooth("s**2", convexity="concave")


@given(st.lists(st.floats(1.0, 500.0), min_size=1, max_size=5),
       st.lists(st.floats(0.0, 3.0), min_size=5, max_size=5),
       st.floats(-1, 1), st.floats(0.5, 400.0))
def test_piecewise_linear_convex_and_supporting(knots, weights, slope, s):
    f = Payoff.piecewise_linear(knots, weights[:len(knots)], 1.0, slope)
    left, right = f.one_sided_derivatives(s)
    assert left <= right + 1e-12
    a, b = f.kink_selection(s)
    xs = np.geomspace(0.1, 1000, 200)
    assert np.all(a * xs + b <= f(xs) + 1e-9 * (1 + np.abs(f(xs))))
