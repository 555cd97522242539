import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from cflit.channel import quantile_threshold
from cflit.errors import DomainError, InvalidInputError
from cflit.rates import (
    MAX_SERIES_N,
    analytic_rate_rsca,
    analytic_rate_threshold,
    exp_integral_e1,
    exp_integral_e1_scaled,
    optimal_threshold_qstar,
    rate_improvement,
    rb_rate,
    theta_from,
    to_kbps,
)

THETA = theta_from(1.0, 6.0, 0.1)


def _quad_rate(n, theta, q):
    f = lambda x: math.log2(1 + theta * x) * n * math.exp(-x) * (1 - math.exp(-x)) ** (n - 1)
    return integrate.quad(f, q, math.inf, epsabs=1e-13, epsrel=1e-12, limit=400)[0]


def test_theta_and_units():
    assert THETA == pytest.approx(2.51188643, rel=1e-8)
    assert to_kbps(1.0) == pytest.approx(62.5)
    with pytest.raises(InvalidInputError):
        theta_from(1.0, -1.0, 0.1)


@pytest.mark.parametrize("z", np.concatenate([np.logspace(-12, 2.8, 120), [0.999999, 1.0, 1.000001]]))
def test_e1_against_mpmath(z):
    ref = float(mpmath.e1(z))
    assert exp_integral_e1(z) == pytest.approx(ref, rel=1e-12)
    ref_s = float(mpmath.exp(z) * mpmath.e1(z))
    assert exp_integral_e1_scaled(z) == pytest.approx(ref_s, rel=1e-12)


def test_e1_large_arguments_stay_finite():
    assert exp_integral_e1(800.0) == 0.0 or exp_integral_e1(800.0) < 1e-300
    assert exp_integral_e1_scaled(1e6) == pytest.approx(1e-6, rel=1e-5)
    assert exp_integral_e1_scaled(math.inf) == 0.0


def test_e1_domain_and_arrays():
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(DomainError):
            exp_integral_e1(bad)
    arr = exp_integral_e1(np.array([[0.5, 2.0]]))
    assert arr.shape == (1, 2)


@pytest.mark.parametrize("n", [1, 2, 5, 10, 20, 25])
@pytest.mark.parametrize("q", [0.0, 0.5, 2.754, 8.0])
def test_threshold_rate_against_quadrature(n, q):
    assert analytic_rate_threshold(n, THETA, q) == pytest.approx(_quad_rate(n, THETA, q), rel=1e-9, abs=1e-14)


def test_rsca_rate_against_quadrature():
    for n in (1, 5, 12):
        q = 1.3
        p_it = 1 - (1 - math.exp(-q)) ** n
        assert analytic_rate_rsca(n, THETA, q) == pytest.approx(p_it * _quad_rate(n, THETA, 0.0), rel=1e-9)


def test_threshold_rate_monte_carlo():
    rng = np.random.default_rng(4)
    g = rng.exponential(size=(5, 400_000)).max(axis=0)
    mc = np.mean(np.where(g >= 2.754, rb_rate(g, THETA), 0.0))
    assert analytic_rate_threshold(5, THETA, 2.754) == pytest.approx(mc, rel=0.01)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, MAX_SERIES_N), theta=st.floats(0.05, 50), q=st.floats(0, 15))
def test_improvement_identity(n, theta, q):
    lhs = rate_improvement(n, theta, q)
    rhs = analytic_rate_threshold(n, theta, q) - analytic_rate_rsca(n, theta, q)
    assert abs(lhs - rhs) < 1e-9
    assert lhs >= -1e-9


def test_improvement_edges():
    for n in (1, 2, 5, 10):
        for th in (0.5, THETA, 10.0):
            assert abs(rate_improvement(n, th, 0.0)) < 1e-12
            qs = optimal_threshold_qstar(n, th)
            assert rate_improvement(n, th, 20 + qs) < 1e-4


def test_qstar_is_stationary_and_maximal():
    for n in (1, 5, 10):
        qs = optimal_threshold_qstar(n, THETA)
        h = 1e-4
        d = (rate_improvement(n, THETA, qs + h) - rate_improvement(n, THETA, qs - h)) / (2 * h)
        assert abs(d) < 1e-7
        grid = np.linspace(0, 20, 2001)
        best = max(rate_improvement(n, THETA, q) for q in grid)
        assert rate_improvement(n, THETA, qs) >= best - 1e-12


def test_large_n_uses_quadrature_consistently():
    n = MAX_SERIES_N + 5
    assert rate_improvement(n, THETA, 1.0) == pytest.approx(
        analytic_rate_threshold(n, THETA, 1.0) - analytic_rate_rsca(n, THETA, 1.0))


def test_reported_share_threshold():
    # IT share at epsilon = 0.36 with T* = 1141
    p_it = 1 - 610 * 1141 / (512 * 2000)
    assert p_it == pytest.approx(0.3203, abs=1e-4)
    assert quantile_threshold(p_it, 5) > 0


def test_input_validation():
    with pytest.raises(InvalidInputError):
        analytic_rate_threshold(0, THETA, 1.0)
    with pytest.raises(InvalidInputError):
        analytic_rate_threshold(5, -1.0, 1.0)
    with pytest.raises(InvalidInputError):
        rate_improvement(5, THETA, -0.5)
    with pytest.raises(InvalidInputError):
        rb_rate(-1.0, THETA)
