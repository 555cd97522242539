"""IT rates: per-RB rate, exponential integral, closed-form expected rates.

All closed forms describe the best of ``N`` i.i.d. Rayleigh IT gains served
with effective SNR scale ``theta = P2 / (phi * sigma^2)``.  They share the
alternating binomial sum

    N * sum_i C(N-1, i) (-1)^i / ((i+1) ln 2) * [...]

which is accumulated with ``math.fsum``.  For more than ``MAX_SERIES_N``
devices the cancellation in that sum gets severe and the expectations are
evaluated by quadrature instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, InvalidInputError

EULER_GAMMA = 0.57721566490153286061
LN2 = math.log(2.0)
MAX_SERIES_N = 20


@dataclass(frozen=True)
class RateParams:
    """Effective SNR scale, number of IT devices, threshold and IT share."""

    theta: float
    n_devices: int
    q: float = 0.0
    p_it: float = 1.0

    def __post_init__(self):
        _check(self.n_devices, self.theta, self.q)


def theta_from(p2: float = 1.0, phi_db: float = 6.0, noise_var: float = 0.1) -> float:
    """``P2 / (phi * sigma^2)`` with the rate gap given in dB (must be >= 0 dB)."""
    if phi_db < 0:
        raise InvalidInputError("the rate gap phi must be at least 1 (0 dB)")
    if not (p2 > 0 and noise_var > 0):
        raise InvalidInputError("P2 and noise variance must be positive")
    return p2 / (10.0 ** (phi_db / 10.0) * noise_var)


def to_kbps(bits_per_rb: float, symbol_duration: float = 16e-6) -> float:
    """Bits per resource block to kbit/s on one subcarrier."""
    return bits_per_rb / symbol_duration / 1e3


def _check(n, theta, q=0.0):
    if int(n) != n or n < 1:
        raise InvalidInputError(f"N must be a positive integer, got {n!r}")
    if not theta > 0 or not math.isfinite(theta):
        raise InvalidInputError(f"theta must be positive, got {theta!r}")
    if not q >= 0:
        raise InvalidInputError(f"threshold q must be non-negative, got {q!r}")


def rb_rate(gain, theta: float):
    """``log2(1 + theta * gain)`` bits on one resource block."""
    g = np.asarray(gain, dtype=float)
    if np.any(g < 0):
        raise InvalidInputError("channel gain must be non-negative")
    if not theta > 0:
        raise InvalidInputError("theta must be positive")
    out = np.log1p(theta * g) / LN2
    return out[()] if out.ndim == 0 else out


def average_sum_rate(grid, it_gains, theta: float) -> float:
    """Average IT sum-rate per resource block of an allocation.

    Args:
        grid: object with boolean ``it_flags`` of shape ``(N, S, M)``.
        it_gains: IT channel gains ``|g|^2`` of the same shape.
        theta: effective SNR scale.
    """
    b = np.asarray(grid.it_flags, dtype=bool)
    g = np.asarray(it_gains, dtype=float)
    if b.shape != g.shape or b.ndim != 3:
        raise InvalidInputError(f"allocation {b.shape} and gains {g.shape} do not match")
    _, S, M = b.shape
    return float(np.sum(rb_rate(g[b], theta)) / (M * S))


# ---------------------------------------------------------------- exponential integral

def _e1_series(z: float) -> float:
    total = 0.0
    term = 1.0
    k = 1
    while True:
        term *= -z / k
        add = term / k
        total += add
        if abs(add) < 1e-17 * abs(total) or k > 500:
            break
        k += 1
    return -EULER_GAMMA - math.log(z) - total


def _e1_scaled_cf(z: float) -> float:
    """``e^z E1(z)`` by the modified Lentz continued fraction (z >= 1)."""
    tiny = 1e-300
    b = z + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def _e1_scalar(z: float) -> float:
    if not z > 0:
        raise DomainError(f"E1 is only defined here for z > 0, got {z!r}")
    if math.isinf(z):
        return 0.0
    if z < 1.0:
        return _e1_series(z)
    return _e1_scaled_cf(z) * math.exp(-z)


def _e1_scaled_scalar(z: float) -> float:
    if not z > 0:
        raise DomainError(f"E1 is only defined here for z > 0, got {z!r}")
    if math.isinf(z):
        return 0.0
    if z < 1.0:
        return math.exp(z) * _e1_series(z)
    return _e1_scaled_cf(z)


def exp_integral_e1(z):
    """First-order exponential integral ``E1(z) = int_z^inf e^-t / t dt``, z > 0."""
    if np.ndim(z) == 0:
        return _e1_scalar(float(z))
    return np.array([_e1_scalar(float(v)) for v in np.ravel(z)]).reshape(np.shape(z))


def exp_integral_e1_scaled(z):
    """``e^z * E1(z)``, finite for large z where the two factors over/underflow."""
    if np.ndim(z) == 0:
        return _e1_scaled_scalar(float(z))
    return np.array([_e1_scaled_scalar(float(v)) for v in np.ravel(z)]).reshape(np.shape(z))


# ---------------------------------------------------------------- closed forms

def _coefs(n: int):
    """``(i, C(N-1,i)(-1)^i / ((i+1) ln2))`` for i = 0..N-1."""
    return [(i, math.comb(n - 1, i) * (-1) ** i / ((i + 1) * LN2)) for i in range(n)]


def _best_gain_density(x, n):
    return n * math.exp(-x) * (-math.expm1(-x)) ** (n - 1)


def _tail_rate_quad(n: int, theta: float, q: float) -> float:
    """``int_q^inf log2(1 + theta x) f(x) dx`` for the best-of-N gain."""
    f = lambda x: math.log1p(theta * x) / LN2 * _best_gain_density(x, n)
    val, _ = integrate.quad(f, q, math.inf, epsabs=1e-14, epsrel=1e-12, limit=500)
    return val


def _mean_log_rate_sum(n: int, theta: float) -> float:
    """``E[log2(1 + theta * best gain)]``."""
    if n > MAX_SERIES_N:
        return _tail_rate_quad(n, theta, 0.0)
    return n * math.fsum(c * _e1_scaled_scalar((i + 1) / theta) for i, c in _coefs(n))


def analytic_rate_threshold(n: int, theta: float, q: float) -> float:
    """Expected average IT sum-rate of the threshold allocator (bits per RB).

    Equals ``E[log2(1 + theta g) ; g >= q]`` for the best-of-N gain g.
    """
    _check(n, theta, q)
    if n > MAX_SERIES_N:
        return _tail_rate_quad(n, theta, q)
    lq = math.log1p(theta * q)
    terms = []
    for i, c in _coefs(n):
        a = (i + 1) / theta
        # e^{a} E1(a + (i+1) q) = e^{-(i+1) q} * scaled_E1(a + (i+1) q)
        decay = math.exp(-(i + 1) * q)
        terms.append(c * decay * (lq + _e1_scaled_scalar(a + (i + 1) * q)))
    return n * math.fsum(terms)


def analytic_rate_rsca(n: int, theta: float, q: float) -> float:
    """Expected average IT sum-rate of random allocation with the same IT share."""
    _check(n, theta, q)
    p_it = -math.expm1(n * math.log(-math.expm1(-q))) if q > 0 else 1.0
    return p_it * _mean_log_rate_sum(n, theta)


def rate_improvement(n: int, theta: float, q: float) -> float:
    """Rate gain of the threshold allocator over random allocation at threshold ``q``."""
    _check(n, theta, q)
    if n > MAX_SERIES_N:
        return analytic_rate_threshold(n, theta, q) - analytic_rate_rsca(n, theta, q)
    lq = math.log1p(theta * q)
    # (1 - e^-q)^N - 1, negative; exactly -1 at q = 0
    miss = math.expm1(n * math.log(-math.expm1(-q))) if q > 0 else -1.0
    terms = []
    for i, c in _coefs(n):
        a = (i + 1) / theta
        decay = math.exp(-(i + 1) * q)
        terms.append(c * decay * lq)
        terms.append(c * decay * _e1_scaled_scalar(a * (1.0 + theta * q)))
        terms.append(c * miss * _e1_scaled_scalar(a))
    return n * math.fsum(terms)


def optimal_threshold_qstar(n: int, theta: float) -> float:
    """Threshold maximising the rate improvement: ``(e^R - 1) / theta``.

    ``R = E[ln(1 + theta g)]`` for the best-of-N gain g.
    """
    _check(n, theta)
    R = LN2 * _mean_log_rate_sum(n, theta)
    return math.expm1(R) / theta
