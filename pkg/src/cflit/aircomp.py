"""Over-the-air model aggregation with MMSE-optimal transceiver scalars.

Per aggregation round every FL device normalises its model change to zero
mean / unit variance symbols, pre-equalises its channel with a complex
transmit scalar, and all devices transmit concurrently on the same ``d``
resource blocks.  The access point scales each received sample by a
de-noising scalar and adds back the weighted mean.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .errors import DegenerateChannelError, InvalidConfigError, InvalidInputError

#: variance floor below which an update is treated as constant
NU_EPS = 1e-12


@dataclass(frozen=True)
class LocalUpdateStats:
    """Summary of one device's model change as uploaded to the access point."""

    delta: np.ndarray
    mean: float
    std: float
    weight: float = 1.0
    symbols: np.ndarray = field(repr=False, default=None)
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return self.delta.size


def normalize_update(delta, weight: float = 1.0) -> LocalUpdateStats:
    """Compute mean, standard deviation and normalised transmit symbols."""
    delta = np.asarray(delta, dtype=float).ravel()
    if delta.size == 0:
        raise InvalidInputError("model change must have at least one entry")
    if not 0.0 < weight <= 1.0:
        raise InvalidInputError(f"device weight must lie in (0, 1], got {weight}")
    mean = float(delta.mean())
    centred = delta - mean
    std = float(np.sqrt(np.mean(centred**2)))
    if std < NU_EPS:
        return LocalUpdateStats(delta, mean, std, weight, np.zeros_like(delta), True)
    return LocalUpdateStats(delta, mean, std, weight, centred / std, False)


@dataclass(frozen=True)
class TransceiverDesign:
    """Transmit scalars ``(devices, d)`` and de-noising scalars ``(d,)``."""

    transmit_scalars: np.ndarray
    denoise_scalars: np.ndarray
    power_cap: float

    def max_power(self) -> float:
        return float(np.max(np.abs(self.transmit_scalars) ** 2))

    def is_feasible(self, atol: float = 1e-12) -> bool:
        return self.max_power() <= self.power_cap + atol


def _prepare(channels, rho, nu, power_cap):
    h = np.asarray(channels, dtype=complex)
    single = h.ndim == 1
    if single:
        h = h[:, None]
    if h.ndim != 2 or h.shape[0] == 0 or h.shape[1] == 0:
        raise InvalidInputError("channels must have shape (devices,) or (devices, d)")
    rho = np.asarray(rho, dtype=float).ravel()
    nu = np.asarray(nu, dtype=float).ravel()
    if rho.shape != (h.shape[0],) or nu.shape != (h.shape[0],):
        raise InvalidInputError("rho and nu need one entry per device")
    if np.any(nu < 0) or np.any(rho <= 0):
        raise InvalidInputError("rho must be positive and nu non-negative")
    if not power_cap > 0:
        raise InvalidConfigError(f"power cap must be positive, got {power_cap}")
    mag = np.abs(h)
    if np.any(mag == 0):
        raise DegenerateChannelError("a channel coefficient is exactly zero")
    return h, mag, rho, nu, single


def optimal_transceiver(channels, rho, nu, power_cap: float):
    """MMSE transmit and de-noising scalars.

    The de-noising scalar is ``max_k rho_k nu_k / |h_k|`` over ``sqrt(P1)`` and
    each device inverts its channel so that ``c h_k p_k / nu_k = rho_k``.  Only
    the device with the largest ratio transmits at full power.  Devices whose
    update has zero variance send nothing.

    Args:
        channels: complex ``(devices,)`` for one resource block or
            ``(devices, d)`` for a whole round.
        rho: aggregation weights, one per device.
        nu: update standard deviations, one per device.
        power_cap: per-subcarrier power limit P1.

    Returns:
        ``(p, c)`` shaped like ``channels`` and ``channels.shape[1:]``.
    """
    h, mag, rho, nu, single = _prepare(channels, rho, nu, power_cap)
    active = nu >= NU_EPS
    ratio = (rho * nu)[:, None] / mag
    ratio[~active] = 0.0
    c = ratio.max(axis=0) / np.sqrt(power_cap)
    p = np.zeros_like(h)
    live = c > 0
    p[:, live] = (rho * nu)[:, None] / (c[live] * h[:, live])
    p[~active] = 0.0
    if single:
        return p[:, 0], complex(c[0])
    return p, c.astype(complex)


def aggregation_mse(channels, rho, nu, power_cap: float, noise_var: float) -> float:
    """Minimum aggregation MSE ``sigma^2 / P1 * sum_i max_k rho^2 nu^2 / |h_ki|^2``."""
    h, mag, rho, nu, _ = _prepare(channels, rho, nu, power_cap)
    if noise_var < 0:
        raise InvalidConfigError("noise variance must be non-negative")
    worst = ((rho * nu)[:, None] ** 2 / mag**2).max(axis=0)
    return float(noise_var / power_cap * worst.sum())


def design_round(stats: list[LocalUpdateStats], channels, power_cap: float) -> TransceiverDesign:
    """Optimal design for a full round given per-device statistics."""
    rho = [s.weight for s in stats]
    nu = [0.0 if s.degenerate else s.std for s in stats]
    p, c = optimal_transceiver(np.atleast_2d(channels), rho, nu, power_cap)
    return TransceiverDesign(p, np.atleast_1d(c), float(power_cap))


@dataclass(frozen=True)
class AggregationResult:
    """Outcome of one over-the-air aggregation.

    ``estimate`` is the real-valued update applied to the model (real part of
    the de-noised sample plus the weighted mean).  ``mse_realized`` is the
    squared error of the complex de-noised estimate, which is what the
    closed-form MSE describes; ``mse_real`` is the error actually applied to
    the model (half of it in expectation, since the imaginary noise is
    discarded).
    """

    estimate: np.ndarray
    exact: np.ndarray
    estimate_complex: np.ndarray
    mse_realized: float
    mse_real: float
    mse_closed_form: float


def aggregate_over_air(
    stats: list[LocalUpdateStats],
    design: TransceiverDesign,
    channels,
    noise_var: float,
    seed=0,
) -> AggregationResult:
    """Simulate superposition, AWGN and de-noising on ``d`` resource blocks.

    Args:
        stats: one :class:`LocalUpdateStats` per device, all of dimension d.
        design: transmit / de-noising scalars for these channels.
        channels: complex ``(devices, d)``.
        noise_var: receiver noise variance sigma^2.
        seed: integer seed or a ``numpy.random.Generator`` for the noise.
    """
    if not stats:
        raise InvalidInputError("need at least one device")
    h = np.atleast_2d(np.asarray(channels, dtype=complex))
    d = stats[0].dim
    K = len(stats)
    if any(s.dim != d for s in stats) or h.shape != (K, d):
        raise InvalidInputError(f"expected channels of shape ({K}, {d}), got {h.shape}")
    if design.transmit_scalars.shape != (K, d) or design.denoise_scalars.shape != (d,):
        raise InvalidInputError("transceiver design does not match the round dimensions")
    if noise_var < 0:
        raise InvalidConfigError("noise variance must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else _rng.keyed(seed, _rng.NOISE)

    x = np.stack([s.symbols for s in stats])
    rho = np.array([s.weight for s in stats])
    z = (rng.standard_normal(d) + 1j * rng.standard_normal(d)) * np.sqrt(noise_var / 2)
    y = np.sum(h * design.transmit_scalars * x, axis=0) + z
    mean = float(np.dot(rho, [s.mean for s in stats]))
    est_c = design.denoise_scalars * y + mean
    exact = rho @ np.stack([s.delta for s in stats])
    estimate = est_c.real
    nu = [0.0 if s.degenerate else s.std for s in stats]
    closed = 0.0
    if np.any(np.asarray(nu) > 0):
        closed = aggregation_mse(h, rho, nu, design.power_cap, noise_var)
    return AggregationResult(
        estimate=estimate,
        exact=exact,
        estimate_complex=est_c,
        mse_realized=float(np.sum(np.abs(est_c - exact) ** 2)),
        mse_real=float(np.sum((estimate - exact) ** 2)),
        mse_closed_form=closed,
    )


def expected_mse_bound(
    learning_rate: float,
    tau: int,
    grad_bound: float,
    noise_var: float,
    power_cap: float,
    channel_term: float,
) -> float:
    """Channel-averaged upper bound on the aggregation MSE of one round."""
    for name, v in (
        ("learning_rate", learning_rate),
        ("tau", tau),
        ("grad_bound", grad_bound),
        ("power_cap", power_cap),
        ("channel_term", channel_term),
    ):
        if not v > 0:
            raise InvalidConfigError(f"{name} must be positive, got {v}")
    if noise_var < 0:
        raise InvalidConfigError(f"noise_var must be non-negative, got {noise_var}")
    return learning_rate**2 * tau**2 * grad_bound**2 * noise_var / power_cap * channel_term


def estimate_channel_term(
    weights,
    n_samples: int,
    seed: int = 0,
    gain_floor: float | None = None,
    *,
    gains=None,
    require_normalized: bool = True,
) -> float:
    """Sample mean of ``max_k rho_k^2 / |h_k|^2`` over Rayleigh draws.

    The exact expectation is infinite (``E[1/|h|^2]`` diverges for Rayleigh
    fading), so the result grows slowly with ``n_samples`` unless
    ``gain_floor`` clamps small gains.  Treat it as an estimator-dependent
    constant.

    Args:
        weights: aggregation weights rho_k.
        n_samples: number of channel draws.
        seed: stream seed.
        gain_floor: optional lower clamp for ``|h_k|^2``.
        gains: optional ``(n_samples, devices)`` gains used instead of
            sampling (test hook).
        require_normalized: check that the weights sum to one.
    """
    rho = np.asarray(weights, dtype=float).ravel()
    if rho.size == 0 or np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        raise InvalidInputError("weights must be positive and finite")
    if require_normalized and abs(rho.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"weights must sum to 1, got {rho.sum()!r}")
    if int(n_samples) < 1:
        raise InvalidInputError("n_samples must be >= 1")
    n_samples = int(n_samples)
    rho2 = rho**2
    if gains is not None:
        g = np.asarray(gains, dtype=float).reshape(-1, rho.size)
        if gain_floor is not None:
            g = np.maximum(g, gain_floor)
        return float(np.mean(np.max(rho2 / g, axis=1)))
    rng = _rng.keyed(seed, _rng.CHANNEL_TERM)
    total = 0.0
    chunk = max(1, 2_000_000 // rho.size)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        # |h|^2 of CN(0,1) is Exp(1)
        g = rng.exponential(size=(n, rho.size))
        if gain_floor is not None:
            g = np.maximum(g, gain_floor)
        total += float(np.sum(np.max(rho2 / g, axis=1)))
        done += n
    return total / n_samples
