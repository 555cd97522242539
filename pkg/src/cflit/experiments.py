"""Registry of reproducible experiments.

Each experiment returns named tables; :func:`reproduce_experiment` writes one
CSV (or JSON) file per table plus a JSON manifest with the configuration,
seeds and timings.

Rate experiments fix ``(tau, T)`` from the base-seed learning setup and draw
fresh IT channels (and RSCA coins) per trial.  Learning experiments keep the
base-seed dataset and redraw minibatches, noise and FL channels per trial.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .allocation import AllocationBudget
from .config import ExperimentConfig
from .errors import InvalidConfigError
from .fl import FLConfig, FLTrace, iid_channels, run_over_the_air
from .hyperopt import optimal_T, zeta
from .io import write_manifest, write_table
from .rates import analytic_rate_rsca, analytic_rate_threshold, to_kbps
from .simulation import (
    LearningSetup,
    it_channel_gains,
    it_rate,
    learning_setup,
    plan_run,
    run_cflit,
    theta_of,
    trial_seeds,
)

#: (label, allocator, fixed tau or None for the optimised value)
SCHEMES = (
    ("offline", "offline", None),
    ("proposed", "online", None),
    ("rsca", "rsca", None),
    ("tau1", "online", 1),
    ("tau10", "online", 10),
)


@dataclass
class ExperimentResult:
    name: str
    tables: dict[str, tuple[tuple[str, ...], list[tuple]]] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def rows(self, table: str) -> list[dict]:
        header, rows = self.tables[table]
        return [dict(zip(header, r)) for r in rows]


# ---------------------------------------------------------------- helpers

def _int_list(text, default):
    if text is None:
        return list(default)
    if isinstance(text, str):
        return [int(v) for v in text.replace(";", ",").split(",") if v.strip()]
    return [int(v) for v in text]


def _fl_config(cfg: ExperimentConfig, tau: int, n_rounds: int, schedule: str | None = None,
               eval_every: int | None = None) -> FLConfig:
    s, l = cfg.system, cfg.learning
    return FLConfig(
        tau=tau, n_rounds=n_rounds, batch=l.batch, clip=l.clip, reg=l.reg, gamma=l.gamma,
        noise_var=s.noise_var, power_cap=s.p1, schedule=schedule or l.schedule,
        base_lr=l.base_lr, compressed_dim=l.compressed_dim or None,
        eval_every=eval_every or l.eval_every,
    )


def fl_tau_sweep(
    cfg: ExperimentConfig,
    taus,
    n_rounds: int,
    *,
    setup: LearningSetup | None = None,
    seeds=None,
    schedule: str | None = None,
    eval_every: int | None = None,
) -> dict[int, list[FLTrace]]:
    """Over-the-air FL with fresh i.i.d. channels for each ``tau`` and trial seed."""
    setup = setup or learning_setup(cfg)
    seeds = trial_seeds(cfg) if seeds is None else seeds
    K = setup.dataset.n_devices
    out = {}
    for tau in taus:
        fc = _fl_config(cfg, int(tau), n_rounds, schedule, eval_every)
        out[int(tau)] = [
            run_over_the_air(setup.dataset, fc, sd, f_star=setup.f_star,
                             channels=iid_channels(sd, K))
            for sd in seeds
        ]
    return out


def _mean_curve(traces: list[FLTrace]):
    rounds = traces[0].rounds
    gap = np.mean([t.gap for t in traces], axis=0)
    gap_avg = np.mean([t.gap_avg for t in traces], axis=0)
    std = np.std([t.gap_avg for t in traces], axis=0)
    return rounds, gap, gap_avg, std


# ---------------------------------------------------------------- experiments

def exp_fig2(cfg: ExperimentConfig, params: dict) -> ExperimentResult:
    """Optimality gap over rounds for several local-step counts."""
    setup = learning_setup(cfg)
    tau_star = plan_run(cfg, setup.bound).tau
    taus = _int_list(params.get("taus"), sorted({1, tau_star, 10, 20}))
    n_rounds = int(params.get("rounds", 1500))
    sweep = fl_tau_sweep(cfg, taus, n_rounds, setup=setup)
    res = ExperimentResult("fig2", summary={"tau_star": tau_star, "rounds": n_rounds})
    summary_rows = []
    for tau, traces in sweep.items():
        r, g, ga, sd = _mean_curve(traces)
        res.tables[f"fig2_tau{tau}"] = (("round", "gap_mean", "gap_avg_mean", "gap_avg_std"),
                                         list(zip(r, g, ga, sd)))
        summary_rows.append((tau, float(ga[-1]), float(g[-1]), len(traces)))
    res.tables["fig2_final"] = (("tau", "final_gap_avg_mean", "final_gap_mean", "trials"),
                                summary_rows)
    return res


def exp_fig3(cfg: ExperimentConfig, params: dict) -> ExperimentResult:
    """Optimality gap of each scheme's FL run (offline shares the proposed FL run)."""
    setup = learning_setup(cfg)
    res = ExperimentResult("fig3")
    final = []
    for label, scheme, tau in SCHEMES[1:]:
        runs = [run_cflit(cfg, sd, scheme=scheme, tau=tau, setup=setup, allow_truncation=True)
                for sd in trial_seeds(cfg)]
        rounds = runs[0].rounds
        ga = np.mean([r.gap_avg for r in runs], axis=0)
        res.tables[f"fig3_{label}"] = (("round", "gap_avg_mean"), list(zip(rounds, ga)))
        final.append((label, runs[0].tau, runs[0].planned_rounds, int(rounds[-1]),
                      runs[0].truncated, float(ga[-1])))
    res.tables["fig3_final"] = (("scheme", "tau", "planned_rounds", "rounds_run", "truncated",
                                 "final_gap_avg_mean"), final)
    return res


def exp_fig4(cfg: ExperimentConfig, params: dict) -> ExperimentResult:
    """Rounds needed for an epsilon-accurate model versus tau."""
    setup = learning_setup(cfg)
    eps = float(params.get("epsilon", cfg.learning.epsilon))
    taus = _int_list(params.get("taus"), range(1, 21))
    bound_T = {t: optimal_T(t, eps, setup.bound) for t in taus}
    simulate = str(params.get("simulate", "0")).lower() in ("1", "true", "yes")
    rows = []
    sim = {}
    if simulate:
        cap = int(params.get("rounds", 3 * min(bound_T.values())))
        sweep = fl_tau_sweep(cfg, taus, cap, setup=setup,
                             eval_every=int(params.get("eval_every", 10)))
        for t, traces in sweep.items():
            hits = [tr.rounds_to(eps) for tr in traces]
            reached = [h for h in hits if h is not None]
            sim[t] = (float(np.mean(reached)) if reached else math.nan, len(reached))
    for t in taus:
        mean, n = sim.get(t, (math.nan, 0))
        rows.append((t, bound_T[t], float(zeta(t, setup.bound)), mean, n))
    best = min(taus, key=lambda t: (bound_T[t], t))
    res = ExperimentResult("fig4", summary={"epsilon": eps, "argmin_tau_bound": best})
    if simulate:
        finite = {t: m for t, (m, _) in sim.items() if not math.isnan(m)}
        if finite:
            res.summary["argmin_tau_sim"] = min(finite, key=lambda t: (finite[t], t))
    res.tables["fig4"] = (("tau", "T_bound", "zeta", "T_sim_mean", "trials_reached"), rows)
    return res


def _rate_rows(cfg: ExperimentConfig, setup: LearningSetup, seeds, schemes=SCHEMES):
    """Monte Carlo IT rates of every scheme; gains are shared across schemes per trial."""
    plans = {label: plan_run(cfg, setup.bound, tau) for label, _, tau in schemes}
    rates = {label: [] for label, _, _ in schemes}
    for sd in seeds:
        gains = it_channel_gains(cfg, sd)
        for label, scheme, _ in schemes:
            rates[label].append(it_rate(cfg, scheme, plans[label], sd, gains))
    theta = theta_of(cfg)
    s = cfg.system
    rows = []
    for label, scheme, _ in schemes:
        p = plans[label]
        r = np.asarray(rates[label])
        analytic = math.nan
        p_it, q = 0.0, math.inf
        if p.feasible:
            b = AllocationBudget(s.n_subcarriers, s.n_symbols, p.demand, s.n_it_devices)
            p_it, q = b.p_it, b.q
            if scheme == "online" and math.isfinite(q):
                analytic = analytic_rate_threshold(s.n_it_devices, theta, q)
            elif scheme == "rsca" and math.isfinite(q):
                analytic = analytic_rate_rsca(s.n_it_devices, theta, q)
        rows.append((label, p.tau, p.n_rounds, p.demand, p.feasible, p_it,
                     float(r.mean()), float(r.std()), to_kbps(float(r.mean()), s.symbol_duration),
                     analytic))
    return rows


RATE_HEADER = ("scheme", "tau", "rounds", "fl_rbs", "feasible", "p_it", "rate_bits_mean",
               "rate_bits_std", "rate_kbps", "rate_bits_analytic")


def exp_table1(cfg: ExperimentConfig, params: dict) -> ExperimentResult:
    """Average IT sum-rate of the five schemes."""
    setup = learning_setup(cfg)
    rows = _rate_rows(cfg, setup, trial_seeds(cfg))
    res = ExperimentResult("table1", summary={"tau_star": rows[1][1], "T_star": rows[1][2]})
    res.tables["table1"] = (RATE_HEADER, rows)
    return res


def exp_fig5(cfg: ExperimentConfig, params: dict) -> ExperimentResult:
    """IT rate versus the number of IT devices."""
    setup = learning_setup(cfg)
    ns = _int_list(params.get("n_values"), range(1, 11))
    out = []
    for n in ns:
        c = cfg.with_values(**{"system.n_it_devices": n})
        out += [(n, *row) for row in _rate_rows(c, setup, trial_seeds(c))]
    res = ExperimentResult("fig5")
    res.tables["fig5"] = (("n_it_devices", *RATE_HEADER), out)
    return res


def _s_values(cfg: ExperimentConfig, params: dict):
    base = cfg.system.n_symbols
    return _int_list(params.get("s_values"),
                     [int(round(base * f)) for f in (0.5, 0.75, 1.0, 1.25, 1.5, 2.0)])


def exp_fig6(cfg: ExperimentConfig, params: dict) -> ExperimentResult:
    """Final optimality gap versus the number of OFDM symbols."""
    setup = learning_setup(cfg)
    out = []
    for S in _s_values(cfg, params):
        c = cfg.with_values(**{"system.n_symbols": S})
        for label, scheme, tau in SCHEMES[1:]:
            runs = [run_cflit(c, sd, scheme=scheme, tau=tau, setup=setup, allow_truncation=True)
                    for sd in trial_seeds(c)]
            out.append((S, label, runs[0].tau, int(runs[0].rounds[-1]) if runs[0].rounds.size else 0,
                        runs[0].truncated, float(np.mean([r.final_gap for r in runs]))))
    res = ExperimentResult("fig6")
    res.tables["fig6"] = (("n_symbols", "scheme", "tau", "rounds_run", "truncated",
                           "final_gap_avg_mean"), out)
    return res


def exp_fig7(cfg: ExperimentConfig, params: dict) -> ExperimentResult:
    """IT rate versus the number of OFDM symbols."""
    setup = learning_setup(cfg)
    out = []
    for S in _s_values(cfg, params):
        c = cfg.with_values(**{"system.n_symbols": S})
        out += [(S, *row) for row in _rate_rows(c, setup, trial_seeds(c))]
    res = ExperimentResult("fig7")
    res.tables["fig7"] = (("n_symbols", *RATE_HEADER), out)
    return res


REGISTRY: dict[str, Callable[[ExperimentConfig, dict], ExperimentResult]] = {
    "fig2": exp_fig2,
    "fig3": exp_fig3,
    "fig4": exp_fig4,
    "fig5": exp_fig5,
    "fig6": exp_fig6,
    "fig7": exp_fig7,
    "table1": exp_table1,
}


def reproduce_experiment(
    name: str,
    cfg: ExperimentConfig,
    out_dir=None,
    *,
    params: dict | None = None,
    fmt: str = "csv",
) -> ExperimentResult:
    """Run experiment ``name`` and write its tables and manifest to ``out_dir``.

    Raises:
        InvalidConfigError: unknown experiment name.
    """
    if name not in REGISTRY:
        raise InvalidConfigError(
            f"unknown experiment {name!r}; available: {', '.join(sorted(REGISTRY))}"
        )
    params = dict(params or {})
    start = time.perf_counter()
    result = REGISTRY[name](cfg, params)
    elapsed = time.perf_counter() - start
    result.summary["wall_time_s"] = elapsed
    if out_dir is not None:
        out = Path(out_dir)
        files = [str(write_table(out / table, header, rows, fmt).name)
                 for table, (header, rows) in result.tables.items()]
        write_manifest(out / f"{name}_manifest.json", experiment=name, config=cfg.to_dict(),
                       params=params, seeds=trial_seeds(cfg), outputs=files,
                       summary=result.summary, timings={"total_s": elapsed})
    return result
