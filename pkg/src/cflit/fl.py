"""Federated training loop with over-the-air aggregation.

Each round every device runs ``tau`` clipped SGD steps from the current
global model, the model changes are sent concurrently over ``d'`` resource
blocks, and the access point adds the de-noised estimate of their weighted
sum to the global model.

With ``compressed_dim`` below the model dimension, every round transmits
only a shared random subset of coordinates.  Unsent coordinates are dropped
unless ``error_feedback`` is set, in which case each device keeps them and
adds them to its next change.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _rng
from .aircomp import aggregate_over_air, design_round, normalize_update
from .errors import InvalidConfigError
from .learning.data import SyntheticDataset
from .learning.model import loss
from .learning.sgd import RunningAverage, local_sgd_devices, paper_schedule, theorem_schedule

ChannelFn = Callable[[int, int], np.ndarray]


@dataclass(frozen=True)
class FLConfig:
    """Hyperparameters of one over-the-air FL run.

    ``schedule`` is ``"paper"`` (``base_lr * gamma / (gamma + t)``) or
    ``"theorem"`` (``8 / (mu tau (gamma + t))`` with ``mu = reg``).
    """

    tau: int
    n_rounds: int
    batch: int = 32
    clip: float = 1.0
    reg: float = 0.5
    gamma: float = 1000.0
    noise_var: float = 0.1
    power_cap: float = 1.0
    schedule: str = "paper"
    base_lr: float = 0.05
    compressed_dim: int | None = None
    error_feedback: bool = False
    eval_every: int = 1

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise InvalidConfigError(f"tau must be a positive integer, got {self.tau}")
        if int(self.n_rounds) != self.n_rounds or self.n_rounds < 0:
            raise InvalidConfigError(f"n_rounds must be a non-negative integer, got {self.n_rounds}")
        if self.schedule not in ("paper", "theorem"):
            raise InvalidConfigError(f"unknown learning-rate schedule {self.schedule!r}")
        if self.noise_var < 0 or not self.power_cap > 0:
            raise InvalidConfigError("need noise_var >= 0 and power_cap > 0")
        if self.compressed_dim is not None and self.compressed_dim < 1:
            raise InvalidConfigError("compressed_dim must be positive")
        if self.eval_every < 1:
            raise InvalidConfigError("eval_every must be >= 1")

    def learning_rate(self) -> Callable[[int], float]:
        if self.schedule == "theorem":
            return theorem_schedule(self.reg, self.tau, self.gamma)
        return paper_schedule(self.base_lr, self.gamma)


@dataclass
class FLTrace:
    """Per-round record of a run.

    ``gap`` is ``F(w_t) - F*`` for the model after round ``t`` and
    ``gap_avg`` the same for the ``(gamma + t)^2`` weighted average of
    ``w_0 .. w_t``.  ``mse`` is the squared error actually applied to the
    model and ``mse_closed_form`` the optimal-design MSE for that round's
    channels.
    """

    rounds: np.ndarray
    gap: np.ndarray
    gap_avg: np.ndarray
    mse: np.ndarray
    mse_closed_form: np.ndarray
    learning_rate: np.ndarray
    weights: np.ndarray
    averaged_weights: np.ndarray

    @property
    def final_gap(self) -> float:
        return float(self.gap[-1]) if self.gap.size else math.nan

    def rounds_to(self, epsilon: float, averaged: bool = True) -> int | None:
        """First round (1-based) whose gap is at most ``epsilon``."""
        series = self.gap_avg if averaged else self.gap
        hit = np.flatnonzero(series <= epsilon)
        return int(self.rounds[hit[0]]) if hit.size else None


def iid_channels(seed: int, n_devices: int) -> ChannelFn:
    """Fresh CN(0, 1) coefficients for every round."""

    def draw(t: int, dim: int) -> np.ndarray:
        z = _rng.keyed(seed, _rng.FL_CHANNEL, t).standard_normal((n_devices, dim, 2))
        return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)

    return draw


def run_over_the_air(
    dataset: SyntheticDataset,
    config: FLConfig,
    seed: int = 0,
    *,
    f_star: float = 0.0,
    channels: ChannelFn | None = None,
    w0=None,
) -> FLTrace:
    """Train for ``config.n_rounds`` rounds and record the optimality gap.

    Args:
        dataset: per-device data; aggregation weights are the dataset shares.
        config: run hyperparameters.
        seed: base seed for minibatches, noise, channels and compression.
        f_star: optimum of the global loss, subtracted from every record.
        channels: ``channels(t, dim)`` returns the ``(devices, dim)`` complex
            coefficients of round ``t``; i.i.d. Rayleigh by default.
        w0: initial model, zeros by default.
    """
    K = dataset.n_devices
    F, C = dataset.n_features, dataset.n_classes
    d = C * F + C
    dprime = d if config.compressed_dim is None else int(config.compressed_dim)
    if dprime > d:
        raise InvalidConfigError(f"compressed_dim {dprime} exceeds model dimension {d}")
    channels = channels or iid_channels(seed, K)
    lr_at = config.learning_rate()
    rho = dataset.weights
    device_data = [dataset.device(k) for k in range(K)]
    X, y = dataset.pooled()

    w = np.zeros(d) if w0 is None else np.array(w0, dtype=float)
    memory = np.zeros((K, d)) if dprime < d and config.error_feedback else None
    avg = RunningAverage(d, config.gamma)
    avg.add(w)

    rec_t, gap, gap_avg, mse, mse_cf, lrs = [], [], [], [], [], []
    for t in range(config.n_rounds):
        lr = lr_at(t)
        rngs = [_rng.keyed(seed, _rng.MINIBATCH, t, k) for k in range(K)]
        delta = local_sgd_devices(w, device_data, config.tau, config.batch, lr, config.clip,
                                  rngs, reg=config.reg)
        if dprime < d:
            if memory is not None:
                delta = delta + memory
            coords = np.sort(_rng.keyed(seed, _rng.COMPRESSION, t).choice(d, dprime, replace=False))
            sent = delta[:, coords]
            if memory is not None:
                memory = delta
                memory[:, coords] = 0.0
        else:
            coords = None
            sent = delta
        stats = [normalize_update(sent[k], rho[k]) for k in range(K)]
        h = channels(t, dprime)
        design = design_round(stats, h, config.power_cap)
        res = aggregate_over_air(stats, design, h, config.noise_var,
                                 _rng.keyed(seed, _rng.NOISE, t))
        if coords is None:
            w = w + res.estimate
        else:
            w = w.copy()
            w[coords] += res.estimate
        avg.add(w)
        if (t + 1) % config.eval_every == 0 or t + 1 == config.n_rounds:
            rec_t.append(t + 1)
            gap.append(loss(w, X, y, config.reg) - f_star)
            gap_avg.append(loss(avg.value, X, y, config.reg) - f_star)
            mse.append(res.mse_real)
            mse_cf.append(res.mse_closed_form)
            lrs.append(lr)

    return FLTrace(
        rounds=np.asarray(rec_t, dtype=np.int64),
        gap=np.asarray(gap),
        gap_avg=np.asarray(gap_avg),
        mse=np.asarray(mse),
        mse_closed_form=np.asarray(mse_cf),
        learning_rate=np.asarray(lrs),
        weights=w,
        averaged_weights=avg.value,
    )
