import json

import numpy as np
import pytest

from cflit.config import ExperimentConfig
from cflit.errors import InfeasibleError, InvalidConfigError, NumericalError
from cflit.experiments import REGISTRY, reproduce_experiment
from cflit.simulation import (
    SimulationTranscript,
    allocate,
    learning_setup,
    plan_run,
    run_cflit,
    trial_seeds,
)


@pytest.fixture(scope="module")
def fast_cfg():
    return ExperimentConfig.desk().with_values(**{
        "learning.epsilon": 3.6, "system.n_symbols": 200,
        "learning.channel_term_samples": 20_000, "learning.eval_every": 5})


@pytest.fixture(scope="module")
def fast_setup(fast_cfg):
    return learning_setup(fast_cfg)


def test_plan(fast_cfg, fast_setup):
    plan = plan_run(fast_cfg, fast_setup.bound)
    assert plan.tau == 5 and plan.upload_dim == 61
    assert plan.feasible and plan.demand == 61 * plan.n_rounds
    one = plan_run(fast_cfg, fast_setup.bound, tau=1, epsilon=0.36)
    assert not one.feasible
    err = one.infeasible_error()
    assert err.deficit == one.demand - one.available


@pytest.mark.parametrize("scheme", ["online", "offline", "rsca"])
def test_run_cflit_transcript(fast_cfg, fast_setup, scheme):
    tr = run_cflit(fast_cfg, 3, scheme=scheme, setup=fast_setup)
    plan = plan_run(fast_cfg, fast_setup.bound)
    assert tr.fl_rbs == plan.demand and not tr.truncated
    assert tr.rounds[-1] == plan.n_rounds
    assert tr.rate_bits > 0 and tr.rate_kbps == pytest.approx(tr.rate_bits / 16e-3)
    assert tr.gap_avg[-1] < tr.gap_avg[0]
    body = json.loads(tr.to_json())
    assert body["scheme"] == scheme and len(body["rounds"]) == len(tr.rounds)
    assert tr.to_csv().splitlines()[0] == "round,gap,gap_avg,mse,mse_closed_form"


def test_rerun_is_byte_identical(fast_cfg, fast_setup):
    a = run_cflit(fast_cfg, 11, setup=fast_setup)
    b = run_cflit(fast_cfg, 11, setup=learning_setup(fast_cfg))
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()


def test_infeasible_and_truncated(fast_cfg, fast_setup):
    cfg = fast_cfg.with_values(**{"learning.epsilon": 0.36})
    with pytest.raises(InfeasibleError):
        run_cflit(cfg, 0, tau=1, setup=fast_setup)
    tr = run_cflit(cfg, 0, tau=1, setup=fast_setup, allow_truncation=True)
    assert tr.truncated and tr.rate_bits == 0.0 and tr.p_it == 0.0 and tr.q is None
    assert tr.fl_rbs == 64 * 200
    assert tr.rounds[-1] == 64 * 200 // 61


def test_transcript_rejects_non_finite():
    arr = np.array([1.0, np.nan])
    with pytest.raises(NumericalError):
        SimulationTranscript("online", 0, 1, 2, 3, 4, 0.5, 1.0, 0.1, 6.25, False,
                             np.arange(2), arr, arr, arr, arr)


def test_allocate_unknown_scheme():
    with pytest.raises(InvalidConfigError):
        allocate("greedy", np.ones((2, 2, 2)), 2, 0)


def test_trial_seeds_distinct():
    cfg = ExperimentConfig.desk().with_values(trials=10)
    s = trial_seeds(cfg)
    assert len(set(s)) == 10 and s == trial_seeds(cfg)
    assert s != trial_seeds(cfg.with_values(seed=1))


def test_registry_names():
    assert set(REGISTRY) == {"fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "table1"}
    with pytest.raises(InvalidConfigError):
        reproduce_experiment("fig8", ExperimentConfig.desk())


def test_table1_small(fast_cfg, tmp_path):
    cfg = fast_cfg.with_values(trials=2)
    res = reproduce_experiment("table1", cfg, tmp_path)
    rates = {r["scheme"]: r["rate_kbps"] for r in res.rows("table1")}
    assert rates["offline"] >= rates["proposed"] > rates["rsca"]
    assert (tmp_path / "table1.csv").exists() and (tmp_path / "table1_manifest.json").exists()
    manifest = json.loads((tmp_path / "table1_manifest.json").read_text())
    assert manifest["config"]["system"]["n_symbols"] == 200


@pytest.mark.parametrize("name,params", [
    ("fig2", {"taus": "1,5", "rounds": "20"}),
    ("fig3", {}),
    ("fig5", {"n_values": "1,3"}),
    ("fig6", {"s_values": "150,200"}),
    ("fig7", {"s_values": "150,200"}),
])
def test_other_experiments_run(fast_cfg, name, params):
    res = reproduce_experiment(name, fast_cfg.with_values(trials=1), None, params=params)
    assert res.tables and all(rows for _, rows in res.tables.values())
