"""Clipped local SGD, global model update and iterate averaging."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .. import _rng
from ..errors import InvalidConfigError, InvalidInputError
from .model import n_classes_for


def paper_schedule(base: float = 0.05, gamma: float = 1000.0) -> Callable[[int], float]:
    """``lambda_t = base * gamma / (gamma + t)``."""
    return lambda t: base * gamma / (gamma + t)


def theorem_schedule(mu: float, tau: int, gamma: float) -> Callable[[int], float]:
    """``lambda_t = 8 / (mu * tau * (gamma + t))`` under which the bound is proven."""
    return lambda t: 8.0 / (mu * tau * (gamma + t))


def minibatch_indices(n_samples: int, tau: int, batch: int, rng: np.random.Generator) -> np.ndarray:
    """``(tau, batch)`` sample indices drawn without replacement within a pass.

    A fresh permutation starts whenever fewer than ``batch`` unused samples
    remain.
    """
    if batch > n_samples:
        raise InvalidConfigError(f"batch size {batch} exceeds local dataset size {n_samples}")
    per_pass = n_samples // batch
    out = []
    need = tau
    while need > 0:
        perm = rng.permutation(n_samples)[: per_pass * batch].reshape(per_pass, batch)
        out.append(perm[:need])
        need -= per_pass
    return np.concatenate(out)


def _run_local(
    w0: np.ndarray,
    Xb: np.ndarray,
    yb: np.ndarray,
    tau: int,
    learning_rate: float,
    clip: float,
    reg: float,
    n_classes: int,
) -> np.ndarray:
    """Run ``tau`` clipped SGD steps for several devices at once.

    ``Xb`` has shape ``(devices, tau, batch, features)`` and ``yb``
    ``(devices, tau, batch)``.  Returns the per-device model change.
    """
    K, _, B, F = Xb.shape
    C = n_classes
    W = np.broadcast_to(w0[: C * F].reshape(C, F), (K, C, F)).copy()
    b = np.broadcast_to(w0[C * F :], (K, C)).copy()
    dev = np.arange(K)[:, None]
    rows = np.arange(B)[None, :]
    for step in range(tau):
        X = Xb[:, step]
        z = X @ W.transpose(0, 2, 1) + b[:, None, :]
        z -= z.max(axis=2, keepdims=True)
        r = np.exp(z)
        r /= r.sum(axis=2, keepdims=True)
        r[dev, rows, yb[:, step]] -= 1.0
        r /= B
        gW = r.transpose(0, 2, 1) @ X + reg * W
        gb = r.sum(axis=1) + reg * b
        norm = np.sqrt(np.einsum("kcf,kcf->k", gW, gW) + np.einsum("kc,kc->k", gb, gb))
        scale = np.where(norm > clip, clip / np.where(norm > 0, norm, 1.0), 1.0)
        W -= (learning_rate * scale)[:, None, None] * gW
        b -= (learning_rate * scale)[:, None] * gb
    w_end = np.concatenate([W.reshape(K, C * F), b], axis=1)
    return w_end - w0


def local_sgd(
    global_weights,
    X,
    y,
    tau: int,
    batch: int,
    learning_rate: float,
    clip: float,
    seed=0,
    *,
    reg: float = 0.5,
) -> np.ndarray:
    """Run ``tau`` steps of clipped minibatch SGD and return the model change.

    Each step takes the gradient of the local regularised loss on a minibatch
    of ``batch`` samples, clips it to norm ``clip`` and moves against it with
    step ``learning_rate``.  The returned change therefore has norm at most
    ``learning_rate * tau * clip``.
    """
    return local_sgd_devices(
        global_weights, [(X, y)], tau, batch, learning_rate, clip, [seed], reg=reg
    )[0]


def local_sgd_devices(
    global_weights,
    device_data: Sequence[tuple[np.ndarray, np.ndarray]],
    tau: int,
    batch: int,
    learning_rate: float,
    clip: float,
    seeds: Sequence,
    *,
    reg: float = 0.5,
) -> np.ndarray:
    """:func:`local_sgd` for several devices, vectorised over the device axis.

    ``seeds`` holds one integer seed or generator per device.  Returns a
    ``(devices, d)`` array of model changes.
    """
    w0 = np.asarray(global_weights, dtype=float).ravel()
    if int(tau) != tau or tau < 1:
        raise InvalidConfigError(f"tau must be a positive integer, got {tau}")
    if learning_rate < 0:
        raise InvalidConfigError("learning rate must be non-negative")
    if not clip > 0:
        raise InvalidConfigError("clipping bound must be positive")
    if len(seeds) != len(device_data):
        raise InvalidInputError("need one seed per device")
    F = np.asarray(device_data[0][0]).shape[1]
    C = n_classes_for(w0, F)
    Xb, yb = [], []
    for (X, y), s in zip(device_data, seeds):
        X = np.asarray(X, dtype=float)
        if X.shape[1] != F:
            raise InvalidInputError("all devices must share the feature dimension")
        rng = s if isinstance(s, np.random.Generator) else _rng.keyed(s, _rng.MINIBATCH)
        idx = minibatch_indices(X.shape[0], int(tau), int(batch), rng)
        Xb.append(X[idx])
        yb.append(np.asarray(y)[idx])
    return _run_local(w0, np.stack(Xb), np.stack(yb), int(tau), float(learning_rate),
                      float(clip), float(reg), C)


@dataclass(frozen=True)
class ModelState:
    """Global model between rounds."""

    weights: np.ndarray
    round_index: int = 0
    learning_rate: float = 0.05


def global_update(
    state: ModelState, estimate, schedule: Callable[[int], float] | None = None
) -> ModelState:
    """Add the aggregated change and advance the round counter."""
    est = np.asarray(estimate, dtype=float).ravel()
    if est.shape != state.weights.shape:
        raise InvalidInputError(
            f"estimate has shape {est.shape}, model has {state.weights.shape}"
        )
    t = state.round_index + 1
    lr = schedule(t) if schedule is not None else state.learning_rate
    return replace(state, weights=state.weights + est, round_index=t, learning_rate=lr)


def averaging_weights(n_rounds: int, gamma: float) -> np.ndarray:
    t = np.arange(n_rounds, dtype=float)
    return (gamma + t) ** 2


def weighted_average(history, gamma: float = 1000.0) -> np.ndarray:
    """Average of ``w_0 .. w_{T-1}`` with weights ``(gamma + t)^2``."""
    H = np.asarray(history, dtype=float)
    if H.ndim != 2 or H.shape[0] == 0:
        raise InvalidInputError("history must be a non-empty (T, d) array")
    eta = averaging_weights(H.shape[0], gamma)
    return eta @ H / eta.sum()


class RunningAverage:
    """Streaming form of :func:`weighted_average`."""

    def __init__(self, dim: int, gamma: float = 1000.0):
        self.gamma = float(gamma)
        self._sum = np.zeros(dim)
        self._weight = 0.0
        self.count = 0

    def add(self, w: np.ndarray) -> None:
        eta = (self.gamma + self.count) ** 2
        self._sum += eta * np.asarray(w, dtype=float)
        self._weight += eta
        self.count += 1

    @property
    def value(self) -> np.ndarray:
        if self.count == 0:
            raise InvalidInputError("no iterates have been added")
        return self._sum / self._weight
