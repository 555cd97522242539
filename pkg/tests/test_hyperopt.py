import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cflit.errors import InvalidConfigError, InvalidInputError
from cflit.hyperopt import (
    BoundParams,
    averaging_mass,
    convergence_bound,
    optimal_T,
    optimal_tau,
    psi,
    tau_relax,
    zeta,
    zeta_table,
)


def test_reported_tau_and_rounds():
    b = BoundParams.paper()
    assert optimal_tau(1.0, 10.25, 0.639) == 6
    assert optimal_T(6, 0.34, b) == 1208
    assert optimal_T(6, 0.36, b) == 1141


def test_rounds_at_other_tau():
    b = BoundParams.paper()
    assert optimal_T(1, 0.34, b) > optimal_T(6, 0.34, b)
    assert optimal_T(10, 0.34, b) > optimal_T(6, 0.34, b)


@settings(max_examples=300, deadline=None)
@given(G=st.floats(0.1, 5), L=st.floats(0.01, 50), gamma_=st.floats(0, 5))
def test_tau_matches_brute_force(G, L, gamma_):
    taus = np.arange(1, 400)
    vals = psi(taus, G, L, gamma_)
    # first index of the minimum, i.e. ties to the smaller tau
    brute = int(taus[np.flatnonzero(vals <= vals.min() * (1 + 1e-13))[0]])
    assert optimal_tau(G, L, gamma_) == brute


def test_iid_data_gives_tau_one():
    assert optimal_tau(1.0, 10.0, 0.0) == 1
    assert tau_relax(1.0, 10.0, 0.0) == 1.0


@settings(max_examples=200, deadline=None)
@given(eps=st.floats(1e-3, 10.0), tau=st.integers(1, 30))
def test_T_is_smallest_meeting_target(eps, tau):
    b = BoundParams.paper()
    T = optimal_T(tau, eps, b)
    z = float(zeta(tau, b))
    assert z / T <= eps * (1 + 1e-12)
    assert T == 1 or z / (T - 1) > eps


def test_zeta_table_and_psi_shape():
    b = BoundParams.paper()
    table = zeta_table(b)
    assert len(table) == 20
    best = min(table, key=lambda r: r[1])[0]
    assert best == 6
    with pytest.raises(InvalidInputError):
        psi(0, 1.0, 1.0, 1.0)


def test_bound_decreasing_and_consistent():
    b = BoundParams.paper(init_dist_sq=2.0)
    vals = [convergence_bound(T, 6, b) for T in (10, 100, 1000, 10_000)]
    fin = [v.finite for v in vals]
    assert all(x > y > 0 for x, y in zip(fin, fin[1:]))
    # the large-T form uses S_T >= T^3 / 3, so it sits above the exact one
    assert all(v.finite <= v.asymptotic for v in vals)
    big = convergence_bound(10**7, 6, b)
    assert big.finite == pytest.approx(big.leading, rel=1e-3)
    assert big.asymptotic == pytest.approx(big.finite, rel=1e-3)


def test_averaging_mass_closed_form():
    for T, g in ((1, 3.0), (7, 1000.0), (50, 2.5)):
        assert averaging_mass(T, g) == pytest.approx(sum((g + t) ** 2 for t in range(T)))


def test_gamma_condition_enforced():
    with pytest.raises(InvalidConfigError):
        convergence_bound(10, 6, BoundParams.paper(gamma=100.0))


def test_bound_params_validation():
    with pytest.raises(InvalidConfigError):
        BoundParams.paper(mu=0.0)
    with pytest.raises(InvalidConfigError):
        BoundParams.paper(hetero=-1.0)
    with pytest.raises(InvalidInputError):
        optimal_T(6, 0.0, BoundParams.paper())
    # noiseless channel is allowed
    assert BoundParams.paper(noise_var=0.0).noise_term == 0.0


def test_noise_term_value():
    b = BoundParams.paper()
    assert b.noise_term == pytest.approx(0.1294)
    assert float(zeta(6, b)) == pytest.approx(48 * (4 + (1 + 12 * 10.25 * 0.639) / 18 + 0.1294))
    assert math.isclose(1208, math.ceil(float(zeta(6, b)) / 0.34))
