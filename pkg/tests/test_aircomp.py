import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cflit.aircomp import (
    aggregate_over_air,
    aggregation_mse,
    design_round,
    estimate_channel_term,
    expected_mse_bound,
    normalize_update,
    optimal_transceiver,
)
from cflit.errors import DegenerateChannelError, InvalidConfigError, InvalidInputError

from oracles import grid_mse_aligned, grid_mse_two_devices, mc_aggregation_mse


def _cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def test_normalize_update():
    s = normalize_update([1.0, 2.0, 3.0, 6.0], 0.25)
    assert s.mean == 3.0
    assert np.isclose(np.mean(s.symbols), 0.0) and np.isclose(np.mean(s.symbols**2), 1.0)
    assert np.allclose(s.mean + s.std * s.symbols, s.delta)
    assert normalize_update(np.full(5, 2.0)).degenerate
    with pytest.raises(InvalidInputError):
        normalize_update([])
    with pytest.raises(InvalidInputError):
        normalize_update([1.0, 2.0], 1.5)


def test_design_respects_power_and_inverts_channel(rng):
    h = _cn(rng, 4, 9)
    rho = np.array([0.1, 0.2, 0.3, 0.4])
    nu = np.array([1.0, 0.5, 2.0, 0.1])
    p, c = optimal_transceiver(h, rho, nu, 2.0)
    assert np.all(np.abs(p) ** 2 <= 2.0 * (1 + 1e-12))
    assert np.allclose(c[None] * h * p, (rho * nu)[:, None])
    # one device per RB hits the cap
    assert np.allclose((np.abs(p) ** 2).max(axis=0), 2.0)


def test_closed_form_matches_monte_carlo(rng):
    for _ in range(5):
        K, d = rng.integers(1, 6), rng.integers(1, 9)
        h = _cn(rng, K, d)
        rho = rng.dirichlet(np.ones(K))
        nu = rng.uniform(0.2, 2.0, K)
        p, c = optimal_transceiver(h, rho, nu, 1.0)
        mc = mc_aggregation_mse(h, p, c, rho, nu, 0.1, 40_000, rng)
        assert mc == pytest.approx(aggregation_mse(h, rho, nu, 1.0, 0.1), rel=0.03)


def test_grid_search_never_beats_closed_form(rng):
    for _ in range(50):
        h = _cn(rng, 2)
        rho = rng.dirichlet([1, 1])
        nu = rng.uniform(0.2, 2.0, 2)
        closed = aggregation_mse(h[:, None], rho, nu, 1.0, 0.1)
        grid = grid_mse_aligned(h, rho, nu, 1.0, 0.1)
        assert grid >= closed - 1e-9
        assert grid <= closed * (1 + 1e-3)


def test_biased_designs_can_do_better(rng):
    # The closed form is the best unbiased design.  Letting the strongest
    # device under-shoot trades bias for noise, and never does worse.
    wins = 0
    for _ in range(20):
        h = _cn(rng, 2)
        rho = rng.dirichlet([1, 1])
        nu = rng.uniform(0.2, 2.0, 2)
        closed = aggregation_mse(h[:, None], rho, nu, 1.0, 0.1)
        free = grid_mse_two_devices(h, rho, nu, 1.0, 0.1)
        assert free <= closed + 1e-9
        wins += free < closed * 0.999
    assert wins > 0


def test_spec_two_device_example():
    h = np.array([1.0 + 0j, 0.5 + 0j])
    p, c = optimal_transceiver(h, [0.5, 0.5], [1.0, 1.0], 1.0)
    assert c == pytest.approx(1.0)
    assert np.allclose(np.abs(p) ** 2, [0.25, 1.0])


def test_noiseless_aggregation_is_exact(rng):
    deltas = rng.standard_normal((3, 12))
    rho = np.array([0.5, 0.3, 0.2])
    stats = [normalize_update(deltas[k], rho[k]) for k in range(3)]
    h = _cn(rng, 3, 12)
    res = aggregate_over_air(stats, design_round(stats, h, 1.0), h, 0.0, seed=1)
    assert np.allclose(res.estimate, rho @ deltas)
    assert res.mse_realized < 1e-20


def test_real_part_halves_mse(rng):
    stats = [normalize_update(rng.standard_normal(4000), w) for w in (0.6, 0.4)]
    # unit-magnitude channels keep the per-RB noise gain bounded
    h = np.exp(2j * np.pi * rng.random((2, 4000)))
    res = aggregate_over_air(stats, design_round(stats, h, 1.0), h, 0.1, seed=3)
    assert res.mse_realized == pytest.approx(res.mse_closed_form, rel=0.05)
    assert res.mse_real == pytest.approx(res.mse_closed_form / 2, rel=0.05)


def test_degenerate_device_sends_nothing(rng):
    stats = [normalize_update(np.ones(4), 0.5), normalize_update(rng.standard_normal(4), 0.5)]
    h = _cn(rng, 2, 4)
    d = design_round(stats, h, 1.0)
    assert np.all(d.transmit_scalars[0] == 0)
    res = aggregate_over_air(stats, d, h, 0.0)
    assert np.allclose(res.estimate, res.exact)


def test_zero_channel_rejected():
    with pytest.raises(DegenerateChannelError):
        optimal_transceiver(np.array([0.0, 1.0 + 0j]), [0.5, 0.5], [1.0, 1.0], 1.0)


def test_shape_checks(rng):
    stats = [normalize_update(rng.standard_normal(4), 1.0)]
    h = _cn(rng, 1, 4)
    d = design_round(stats, h, 1.0)
    with pytest.raises(InvalidInputError):
        aggregate_over_air(stats, d, _cn(rng, 1, 5), 0.1)
    with pytest.raises(InvalidConfigError):
        aggregate_over_air(stats, d, h, -0.1)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(1, 5), d=st.integers(1, 16))
def test_seeded_aggregation_deterministic(seed, k, d):
    r = np.random.default_rng(seed)
    stats = [normalize_update(r.standard_normal(d), 1.0 / k) for _ in range(k)]
    h = _cn(r, k, d)
    des = design_round(stats, h, 1.0)
    a = aggregate_over_air(stats, des, h, 0.1, seed=seed)
    b = aggregate_over_air(stats, des, h, 0.1, seed=seed)
    assert np.array_equal(a.estimate, b.estimate)
    assert np.isfinite(a.mse_closed_form) and a.mse_closed_form >= 0


def test_channel_term_with_injected_gains():
    gains = np.array([[1.0, 4.0], [0.25, 1.0]])
    rho = np.array([0.5, 0.5])
    # max_k rho^2/g: row0 max(0.25, 0.0625)=0.25, row1 max(1.0, 0.25)=1.0
    assert estimate_channel_term(rho, 2, gains=gains) == pytest.approx(0.625)
    with pytest.raises(InvalidInputError):
        estimate_channel_term([0.4, 0.4], 10)
    estimate_channel_term([0.4, 0.4], 10, require_normalized=False)


def test_expected_mse_bound():
    assert expected_mse_bound(0.1, 5, 1.0, 0.1, 1.0, 2.0) == pytest.approx(0.01 * 25 * 0.1 * 2.0)
    with pytest.raises(InvalidConfigError):
        expected_mse_bound(0.1, 5, 1.0, 0.1, 0.0, 2.0)
