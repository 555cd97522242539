"""End-to-end CFLIT runs: plan FL, allocate resource blocks, train, rate IT."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .aircomp import estimate_channel_term
from .allocation import (
    FL,
    AllocationBudget,
    AllocationGrid,
    offline_allocate,
    online_allocate,
    partition_fl_rbs,
    rsca_allocate,
)
from .channel import BlockFadingField
from .config import ExperimentConfig
from .errors import InfeasibleError, InvalidConfigError, NumericalError
from .fl import FLConfig, run_over_the_air
from .hyperopt import BoundParams, optimal_T, optimal_tau
from .learning.data import SyntheticDataset, generate_synthetic
from .learning.optimum import LearningParams, estimate_learning_params, estimate_optimum
from .rates import average_sum_rate, theta_from, to_kbps

#: learning constants reported for the 20-device synthetic task
REPORTED_CONSTANTS = dict(lipschitz=10.25, hetero=0.639, channel_term=1.294)


@dataclass
class LearningSetup:
    """Dataset, optimum and convergence-bound constants of one configuration."""

    dataset: SyntheticDataset
    bound: BoundParams
    f_star: float
    params: LearningParams | None = None


def learning_setup(cfg: ExperimentConfig, seed: int | None = None,
                   dataset: SyntheticDataset | None = None) -> LearningSetup:
    """Generate the dataset and resolve mu, L, Gamma and the channel term."""
    seed = cfg.seed if seed is None else seed
    s, l = cfg.system, cfg.learning
    if dataset is None:
        dataset = generate_synthetic(l.alpha, l.beta, s.n_fl_devices, l.total_samples,
                                     l.power_law_exponent, seed)
    if l.constants == "paper":
        X, y = dataset.pooled()
        f_star, _ = estimate_optimum(X, y, l.reg, n_classes=dataset.n_classes)
        params = None
        consts = REPORTED_CONSTANTS
    else:
        params = estimate_learning_params(dataset, l.reg, clip=l.clip, gamma=l.gamma,
                                          batch=l.batch)
        f_star = params.f_star
        ct = estimate_channel_term(dataset.weights, l.channel_term_samples, seed)
        consts = dict(lipschitz=params.lipschitz, hetero=params.hetero, channel_term=ct)
    bound = BoundParams(mu=l.reg, grad_bound=l.clip, noise_var=s.noise_var, power_cap=s.p1,
                        gamma=l.gamma, **consts)
    return LearningSetup(dataset, bound, float(f_star), params)


@dataclass(frozen=True)
class RunPlan:
    """Local steps, rounds and the resulting FL resource-block demand."""

    tau: int
    n_rounds: int
    upload_dim: int
    available: int
    n_subcarriers: int

    @property
    def demand(self) -> int:
        return self.upload_dim * self.n_rounds

    @property
    def feasible(self) -> bool:
        return self.demand <= self.available

    @property
    def max_rounds(self) -> int:
        return self.available // self.upload_dim

    def infeasible_error(self) -> InfeasibleError:
        return InfeasibleError(self.demand, self.available,
                               math.ceil(self.demand / self.n_subcarriers))


def plan_run(cfg: ExperimentConfig, bound: BoundParams, tau: int | None = None,
             epsilon: float | None = None) -> RunPlan:
    """``tau`` (optimised when 0/None) and the rounds needed for ``epsilon``."""
    tau = tau or cfg.allocation.tau or optimal_tau(bound.grad_bound, bound.lipschitz, bound.hetero)
    eps = cfg.learning.epsilon if epsilon is None else epsilon
    T = optimal_T(tau, eps, bound)
    s = cfg.system
    return RunPlan(int(tau), int(T), cfg.upload_dim, s.n_subcarriers * s.n_symbols,
                   s.n_subcarriers)


def it_channel_gains(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    """IT gains ``|g|^2`` with shape ``(N, S, M)``."""
    s = cfg.system
    field_ = BlockFadingField(s.n_it_devices, s.n_subcarriers, s.n_symbols, seed,
                              s.coherence_block_len, _rng.IT_CHANNEL, s.channel_profile, s.n_taps)
    return field_.materialize().gains


def fl_channel_field(cfg: ExperimentConfig, seed: int) -> BlockFadingField:
    s = cfg.system
    return BlockFadingField(s.n_fl_devices, s.n_subcarriers, s.n_symbols, seed,
                            s.coherence_block_len, _rng.FL_CHANNEL, s.channel_profile, s.n_taps)


def allocate(scheme: str, gains: np.ndarray, fl_demand: int, seed: int) -> AllocationGrid:
    """Run one of the allocators on full gains; ``online``/``rsca`` see them causally."""
    N, S, M = gains.shape
    if scheme == "offline":
        return offline_allocate(gains, fl_demand)
    stream = (gains[:, s, :] for s in range(S))
    if scheme == "online":
        return online_allocate(stream, M, S, fl_demand, N)
    if scheme == "rsca":
        return rsca_allocate(stream, M, S, fl_demand, N, seed)
    raise InvalidConfigError(f"unknown allocation scheme {scheme!r}")


def theta_of(cfg: ExperimentConfig) -> float:
    s = cfg.system
    return theta_from(s.p2, s.phi_db, s.noise_var)


def it_rate(cfg: ExperimentConfig, scheme: str, plan: RunPlan, seed: int,
            gains: np.ndarray | None = None) -> float:
    """Average IT sum-rate in bits per RB; zero when FL cannot be satisfied."""
    if not plan.feasible:
        return 0.0
    gains = it_channel_gains(cfg, seed) if gains is None else gains
    grid = allocate(scheme, gains, plan.demand, seed)
    return average_sum_rate(grid, gains, theta_of(cfg))


def _finite(x) -> bool:
    return bool(np.all(np.isfinite(np.asarray(x, dtype=float))))


@dataclass
class SimulationTranscript:
    """Everything recorded by :func:`run_cflit` for one trial.

    ``truncated`` marks runs that were explicitly allowed to stop at the
    available number of rounds instead of the planned one.
    """

    scheme: str
    seed: int
    tau: int
    planned_rounds: int
    upload_dim: int
    fl_rbs: int
    p_it: float
    q: float | None
    rate_bits: float
    rate_kbps: float
    truncated: bool
    rounds: np.ndarray = field(repr=False)
    gap: np.ndarray = field(repr=False)
    gap_avg: np.ndarray = field(repr=False)
    mse: np.ndarray = field(repr=False)
    mse_closed_form: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("gap", "gap_avg", "mse", "mse_closed_form"):
            if not _finite(getattr(self, name)):
                raise NumericalError(f"transcript field {name} has non-finite entries")
        if not _finite([self.p_it, self.rate_bits, self.rate_kbps]):
            raise NumericalError("transcript summary has non-finite entries")

    @property
    def final_gap(self) -> float:
        return float(self.gap_avg[-1]) if self.gap_avg.size else math.nan

    def metadata(self) -> dict:
        return {
            "scheme": self.scheme, "seed": self.seed, "tau": self.tau,
            "planned_rounds": self.planned_rounds, "upload_dim": self.upload_dim,
            "fl_rbs": self.fl_rbs, "p_it": self.p_it, "q": self.q,
            "rate_bits_per_rb": self.rate_bits, "rate_kbps": self.rate_kbps,
            "truncated": self.truncated,
        }

    def round_rows(self) -> list[tuple]:
        return [(int(t), float(g), float(ga), float(e), float(ec)) for t, g, ga, e, ec in
                zip(self.rounds, self.gap, self.gap_avg, self.mse, self.mse_closed_form)]

    ROUND_HEADER = ("round", "gap", "gap_avg", "mse", "mse_closed_form")

    def to_csv(self) -> str:
        lines = [",".join(self.ROUND_HEADER)]
        lines += [",".join(repr(v) for v in row) for row in self.round_rows()]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        body = dict(self.metadata())
        body["rounds"] = [dict(zip(self.ROUND_HEADER, row)) for row in self.round_rows()]
        return json.dumps(body, sort_keys=True, indent=1) + "\n"


def run_cflit(
    cfg: ExperimentConfig,
    seed: int | None = None,
    *,
    scheme: str | None = None,
    tau: int | None = None,
    setup: LearningSetup | None = None,
    allow_truncation: bool = False,
) -> SimulationTranscript:
    """Plan, allocate, train and rate one CFLIT trial.

    Args:
        cfg: experiment configuration.
        seed: trial seed (defaults to ``cfg.seed``); keys channels, noise and
            minibatches.  The dataset comes from ``setup`` when given.
        scheme: allocation scheme, defaults to ``cfg.allocation.scheme``.
        tau: fixed number of local steps; optimised when omitted.
        setup: precomputed :class:`LearningSetup` to share across runs.
        allow_truncation: when FL needs more RBs than exist, train on all of
            them for as many rounds as fit and report zero IT rate.  Without
            this flag the run raises :class:`InfeasibleError`.
    """
    seed = cfg.seed if seed is None else int(seed)
    scheme = scheme or cfg.allocation.scheme
    setup = setup or learning_setup(cfg, seed)
    plan = plan_run(cfg, setup.bound, tau)
    s, l = cfg.system, cfg.learning
    M, S, N = s.n_subcarriers, s.n_symbols, s.n_it_devices

    truncated = not plan.feasible
    if truncated and not allow_truncation:
        raise plan.infeasible_error()
    n_rounds = plan.n_rounds if not truncated else plan.max_rounds
    demand = plan.upload_dim * n_rounds
    budget = AllocationBudget(M, S, demand, N)

    if truncated:
        # FL holds every RB; the tail that does not fill a round stays unused
        grid = AllocationGrid.from_owner(np.full((S, M), FL, dtype=np.int64), N)
        groups = list(grid.fl_rb_order[:demand].reshape(n_rounds, plan.upload_dim))
        rate = 0.0
    else:
        gains = it_channel_gains(cfg, seed)
        grid = allocate(scheme, gains, demand, seed)
        groups = partition_fl_rbs(grid, plan.upload_dim)
        rate = average_sum_rate(grid, gains, theta_of(cfg))

    field_ = fl_channel_field(cfg, seed)

    def channels(t: int, dim: int) -> np.ndarray:
        sym, sub = np.divmod(groups[t], M)
        return field_.at(sym, sub)

    fl_cfg = FLConfig(
        tau=plan.tau, n_rounds=n_rounds, batch=l.batch, clip=l.clip, reg=l.reg,
        gamma=l.gamma, noise_var=s.noise_var, power_cap=s.p1, schedule=l.schedule,
        base_lr=l.base_lr, compressed_dim=l.compressed_dim or None, eval_every=l.eval_every,
    )
    trace = run_over_the_air(setup.dataset, fl_cfg, seed, f_star=setup.f_star, channels=channels)
    q = None if truncated or math.isinf(budget.q) else float(budget.q)
    return SimulationTranscript(
        scheme=scheme, seed=seed, tau=plan.tau, planned_rounds=plan.n_rounds,
        upload_dim=plan.upload_dim, fl_rbs=grid.fl_count, p_it=0.0 if truncated else budget.p_it,
        q=q, rate_bits=float(rate), rate_kbps=to_kbps(rate, s.symbol_duration),
        truncated=truncated, rounds=trace.rounds, gap=trace.gap, gap_avg=trace.gap_avg,
        mse=trace.mse, mse_closed_form=trace.mse_closed_form,
    )


def trial_seeds(cfg: ExperimentConfig, n: int | None = None) -> list[int]:
    return [_rng.trial_seed(cfg.seed, i) for i in range(cfg.trials if n is None else n)]
