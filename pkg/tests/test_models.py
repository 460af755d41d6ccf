import io
import math

import numpy as np
import pytest

from robust_hedge import DomainError
from robust_hedge.models import (BlackScholes, StochVol, TimeDependentVol, path_seed, refine_grid, refine_seed,
                                 simulate_path, write_path_csv)


def test_seed_determinism(bs):
    a = simulate_path(bs, 1.0, 100, path_seed(3, 5))
    b = simulate_path(bs, 1.0, 100, path_seed(3, 5))
    c = simulate_path(bs, 1.0, 100, path_seed(3, 6))
    assert np.array_equal(a.s1, b.s1)
    assert not np.array_equal(a.s1, c.s1)
    assert path_seed(3, 5) != refine_seed(3, 5)


def test_grid_shape_and_qv(bs):
    p = simulate_path(bs, 0.5, 400, 1)
    assert p.times.shape == (401,) and p.times[-1] == 0.5
    assert p.qv[-1] == pytest.approx(0.02, rel=1e-14)
    assert np.allclose(p.s_tilde, p.s1 / p.s0)


def test_martingale_discounted_stock():
    model = BlackScholes(0.3, 0.05, 100.0)
    finals = np.array([simulate_path(model, 1.0, 1, path_seed(11, i)).s_tilde[-1] for i in range(100_000)])
    se = finals.std() / math.sqrt(finals.size)
    assert abs(finals.mean() - 100.0) < 4 * se
    p = simulate_path(model, 1.0, 10, 1)
    assert p.s0[-1] == pytest.approx(math.exp(0.05))


def test_realized_variance_matches_model_qv():
    for model in (BlackScholes(0.2), TimeDependentVol([[0.0, 0.1], [1.0, 0.3]]),
                  StochVol(0.04, 1.5, 0.06, 0.3, -0.5)):
        p = simulate_path(model, 1.0, 100_000, path_seed(2, 0))
        rv = np.sum(np.diff(np.log(p.s_tilde)) ** 2)
        assert rv == pytest.approx(p.qv[-1], rel=0.01)


def test_stoch_vol_without_vol_of_vol_is_time_dependent():
    k, th, v0 = 2.0, 0.09, 0.04
    sv = StochVol(v0, k, th, 0.0, 0.3)
    td = TimeDependentVol(lambda t: np.sqrt(th + (v0 - th) * np.exp(-k * t)))
    a = simulate_path(sv, 1.0, 1000, path_seed(9, 1))
    b = simulate_path(td, 1.0, 1000, path_seed(9, 1))
    assert np.max(np.abs(a.s1 - b.s1) / b.s1) < 1e-10
    assert np.max(np.abs(a.qv - b.qv)) < 1e-10


def test_time_dependent_constant_equals_black_scholes():
    a = simulate_path(TimeDependentVol([[0.0, 0.2]]), 1.0, 500, 5)
    b = simulate_path(BlackScholes(0.2), 1.0, 500, 5)
    assert np.allclose(a.s1, b.s1, rtol=1e-13)


def test_refine_grid_keeps_coarse_points_and_law(bs):
    p = simulate_path(bs, 1.0, 50, 4)
    r = refine_grid(p, 8, 17)
    assert r.steps == 400
    assert np.array_equal(r.s_tilde[::8], p.s_tilde)
    assert np.allclose(r.times[::8], p.times)
    # bridge increments have the right variance on average: sum of squared log-increments ~ qv
    rs = [np.sum(np.diff(np.log(refine_grid(p, 16, s).s_tilde)) ** 2) for s in range(40)]
    assert np.mean(rs) == pytest.approx(p.qv[-1], rel=0.05)


def test_refine_rejects_stochastic_vol():
    p = simulate_path(StochVol(0.04, 1.0, 0.04, 0.2), 1.0, 10, 1)
    with pytest.raises(TypeError):
        refine_grid(p, 4, 1)


def test_csv_dump_round_trip(bs):
    p = simulate_path(bs, 1.0, 20, 3)
    buf = io.StringIO()
    write_path_csv(p, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "t,s1,s0,s_tilde,qv"
    vals = np.array([[float(x) for x in l.split(",")] for l in lines[1:]])
    assert np.array_equal(vals[:, 1], p.s1)


def test_domain_checks():
    with pytest.raises(DomainError):
        BlackScholes(-0.1)
    with pytest.raises(DomainError):
        simulate_path(BlackScholes(0.2), 1.0, 0, 1)
    with pytest.raises(DomainError):
        StochVol(0.04, 1.0, 0.04, 0.2, correlation=2.0)
