import numpy as np
import pytest
from sklearn.utils.estimator_checks import parametrize_with_checks

from cflit import _rng
from cflit.errors import InvalidConfigError
from cflit.fl import FLConfig, iid_channels, run_over_the_air
from cflit.learning import generate_synthetic, local_sgd_devices, loss
from cflit.learning.estimator import OverTheAirFLClassifier


@pytest.fixture(scope="module")
def small_ds():
    return generate_synthetic(1.0, 1.0, 4, 400, 1.5, seed=3, min_size=40)


def test_noiseless_run_is_fedavg(small_ds):
    cfg = FLConfig(tau=3, n_rounds=5, batch=8, noise_var=0.0, reg=0.5)
    tr = run_over_the_air(small_ds, cfg, seed=11)
    # reference: plain weighted averaging of the same local updates
    w = np.zeros(610)
    data = [small_ds.device(k) for k in range(4)]
    for t in range(5):
        rngs = [_rng.keyed(11, _rng.MINIBATCH, t, k) for k in range(4)]
        lr = cfg.learning_rate()(t)
        w = w + small_ds.weights @ local_sgd_devices(w, data, 3, 8, lr, 1.0, rngs, reg=0.5)
    assert np.allclose(tr.weights, w, atol=1e-12)
    X, y = small_ds.pooled()
    assert tr.gap[-1] == pytest.approx(loss(w, X, y, 0.5))


def test_run_is_deterministic(small_ds):
    cfg = FLConfig(tau=2, n_rounds=6, batch=8, compressed_dim=50)
    a = run_over_the_air(small_ds, cfg, seed=5)
    b = run_over_the_air(small_ds, cfg, seed=5)
    c = run_over_the_air(small_ds, cfg, seed=6)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.gap, b.gap)
    assert not np.array_equal(a.weights, c.weights)


def test_full_dimension_compression_is_a_no_op(small_ds):
    a = run_over_the_air(small_ds, FLConfig(tau=2, n_rounds=3, batch=8), seed=1)
    b = run_over_the_air(small_ds, FLConfig(tau=2, n_rounds=3, batch=8, compressed_dim=610), seed=1)
    assert np.array_equal(a.weights, b.weights)


def test_compression_touches_only_chosen_coordinates(small_ds):
    cfg = FLConfig(tau=2, n_rounds=1, batch=8, compressed_dim=40)
    tr = run_over_the_air(small_ds, cfg, seed=2)
    assert np.count_nonzero(tr.weights) <= 40


def test_error_feedback_keeps_unsent_changes(small_ds):
    base = dict(tau=2, n_rounds=4, batch=8, compressed_dim=100, noise_var=0.0)
    plain = run_over_the_air(small_ds, FLConfig(**base), seed=3)
    ef = run_over_the_air(small_ds, FLConfig(**base, error_feedback=True), seed=3)
    assert not np.array_equal(plain.weights, ef.weights)
    assert np.count_nonzero(ef.weights) >= np.count_nonzero(plain.weights)


def test_training_reduces_gap(small_ds):
    tr = run_over_the_air(small_ds, FLConfig(tau=4, n_rounds=60, batch=16), seed=0)
    assert tr.gap_avg[-1] < tr.gap_avg[0]
    assert tr.gap[-1] < 0.7 * tr.gap[0]
    # mse records the real-part error, about half the closed form on average
    assert 0.2 < np.mean(tr.mse) / np.mean(tr.mse_closed_form) < 1.0


def test_trace_helpers(small_ds):
    tr = run_over_the_air(small_ds, FLConfig(tau=2, n_rounds=10, batch=8, eval_every=3), seed=0)
    assert list(tr.rounds) == [3, 6, 9, 10]
    assert tr.rounds_to(1e9) == 3
    assert tr.rounds_to(-1.0) is None


def test_custom_channels(small_ds):
    calls = []

    def chan(t, d):
        calls.append((t, d))
        return np.ones((4, d), dtype=complex)

    run_over_the_air(small_ds, FLConfig(tau=1, n_rounds=2, batch=8, compressed_dim=30), channels=chan)
    assert calls == [(0, 30), (1, 30)]
    h = iid_channels(0, 4)(0, 1000)
    assert h.shape == (4, 1000) and abs(np.mean(np.abs(h) ** 2) - 1) < 0.05


@pytest.mark.parametrize("kw", [dict(tau=0), dict(n_rounds=-1), dict(schedule="cosine"),
                                dict(noise_var=-1.0), dict(compressed_dim=0), dict(eval_every=0)])
def test_config_validation(kw):
    args = dict(tau=1, n_rounds=1)
    args.update(kw)
    with pytest.raises(InvalidConfigError):
        FLConfig(**args)


def test_compressed_dim_above_model(small_ds):
    with pytest.raises(InvalidConfigError):
        run_over_the_air(small_ds, FLConfig(tau=1, n_rounds=1, compressed_dim=611))


@parametrize_with_checks([OverTheAirFLClassifier(n_rounds=15, n_devices=3, batch=4)])
def test_sklearn_compatible(estimator, check):
    check(estimator)


def test_classifier_learns_separable_data():
    r = np.random.default_rng(0)
    X = np.concatenate([r.normal(-2, 1, (150, 3)), r.normal(2, 1, (150, 3))])
    y = np.array(["a"] * 150 + ["b"] * 150)
    p = r.permutation(300)
    clf = OverTheAirFLClassifier(n_rounds=80, n_devices=5, batch=8, reg=0.01)
    clf.fit(X[p], y[p])
    assert clf.score(X, y) > 0.95
    assert set(clf.predict(X)) <= {"a", "b"}
    groups = np.arange(300) % 3
    assert clf.fit(X[p], y[p], groups=groups).trace_.gap.size == 1
