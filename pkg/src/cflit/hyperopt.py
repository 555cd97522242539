"""Convergence bound and closed-form choice of local steps and rounds."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidInputError


@dataclass(frozen=True)
class BoundParams:
    """Constants of the over-the-air FL convergence bound.

    ``channel_term`` is the estimate of ``E[max_k rho_k^2 / |h_k|^2]`` and
    ``init_dist_sq`` the squared distance of the initial model to the optimum.
    """

    mu: float
    lipschitz: float
    hetero: float
    grad_bound: float
    noise_var: float
    power_cap: float
    channel_term: float
    gamma: float = 1000.0
    init_dist_sq: float = 0.0

    def __post_init__(self):
        for name in ("mu", "lipschitz", "grad_bound", "power_cap", "gamma"):
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("hetero", "noise_var", "channel_term", "init_dist_sq"):
            if not getattr(self, name) >= 0:
                raise InvalidConfigError(f"{name} must be non-negative, got {getattr(self, name)}")

    @property
    def noise_term(self) -> float:
        return self.grad_bound**2 * self.noise_var / self.power_cap * self.channel_term

    @classmethod
    def paper(cls, **overrides) -> "BoundParams":
        """Constants reported for the 20-device synthetic task."""
        values = dict(mu=0.5, lipschitz=10.25, hetero=0.639, grad_bound=1.0, noise_var=0.1,
                      power_cap=1.0, channel_term=1.294, gamma=1000.0)
        values.update(overrides)
        return cls(**values)


def _check_tau(tau) -> None:
    if not tau >= 1:
        raise InvalidInputError(f"tau must be >= 1, got {tau}")


def psi(tau, grad_bound: float, lipschitz: float, hetero: float):
    """Tau-dependent part of the per-round bound constant."""
    _check_tau(np.min(tau))
    tau = np.asarray(tau, dtype=float)
    G2 = grad_bound**2
    out = 2.0 * G2 / 3.0 * tau + (G2 + 12.0 * lipschitz * hetero) / (3.0 * tau)
    return out[()] if out.ndim == 0 else out


def zeta(tau, params: BoundParams):
    """Leading-order constant of the bound: gap is about ``zeta(tau) / T``."""
    p = params
    return 24.0 / p.mu * (psi(tau, p.grad_bound, p.lipschitz, p.hetero) + p.noise_term)


def tau_relax(grad_bound: float, lipschitz: float, hetero: float) -> float:
    """Real-valued minimiser of :func:`psi` over ``tau >= 1``."""
    if not grad_bound > 0:
        raise InvalidInputError("grad_bound must be positive")
    return max(1.0, math.sqrt(0.5 + 6.0 * lipschitz * hetero / grad_bound**2))


def optimal_tau(grad_bound: float, lipschitz: float, hetero: float) -> int:
    """Integer minimiser of :func:`psi`; ties go to the smaller value."""
    t = tau_relax(grad_bound, lipschitz, hetero)
    lo, hi = math.floor(t), math.ceil(t)
    if lo == hi:
        return int(lo)
    f_lo = psi(lo, grad_bound, lipschitz, hetero)
    f_hi = psi(hi, grad_bound, lipschitz, hetero)
    return int(lo if f_lo <= f_hi else hi)


def optimal_T(tau_star: int, epsilon: float, params: BoundParams) -> int:
    """Fewest rounds with ``zeta(tau_star) / T <= epsilon`` (at least one)."""
    if not epsilon > 0:
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    return max(1, math.ceil(float(zeta(tau_star, params)) / epsilon))


@dataclass(frozen=True)
class BoundValue:
    """Bound on the expected optimality gap after ``T`` rounds.

    Attributes:
        finite: the full finite-T bound using the exact averaging mass S_T.
        asymptotic: ``zeta/T + 2 gamma zeta/T^2 + 3 mu gamma^3 D0/(4 T^3)``.
        leading: ``zeta/T``, the term used to choose T.
    """

    finite: float
    asymptotic: float
    leading: float


def averaging_mass(T: int, gamma: float) -> float:
    """``S_T = sum_{t<T} (gamma + t)^2`` in closed form."""
    T = int(T)
    return gamma**2 * T + gamma * T * (T - 1) + T * (T - 1) * (2 * T - 1) / 6.0


def convergence_bound(T: int, tau: int, params: BoundParams) -> BoundValue:
    """Evaluate the finite-T bound and its large-T forms.

    Raises:
        InvalidConfigError: ``gamma < 16 L / mu``, where the bound is not valid.
    """
    if int(T) < 1:
        raise InvalidInputError("T must be >= 1")
    _check_tau(tau)
    p = params
    if p.gamma < 16.0 * p.lipschitz / p.mu:
        raise InvalidConfigError(
            f"gamma={p.gamma} is below 16 L / mu = {16.0 * p.lipschitz / p.mu}"
        )
    z = float(zeta(tau, p))
    S = averaging_mass(T, p.gamma)
    finite = (8.0 * T * (T + 2.0 * p.gamma) / (p.mu * S)) * (p.mu / 24.0 * z) + (
        p.mu * p.gamma**3 / (4.0 * S) * p.init_dist_sq
    )
    asym = z / T + 2.0 * p.gamma * z / T**2 + 3.0 * p.mu * p.gamma**3 * p.init_dist_sq / (4.0 * T**3)
    return BoundValue(finite=finite, asymptotic=asym, leading=z / T)


def zeta_table(params: BoundParams, taus=range(1, 21)) -> list[tuple[int, float]]:
    return [(int(t), float(zeta(t, params))) for t in taus]
