"""Regularised multinomial logistic regression on a flat parameter vector.

The parameter vector stacks the row-major ``classes x features`` weight
matrix followed by the ``classes`` biases; with 60 features and 10 classes
that is 610 entries.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError

N_FEATURES = 60
N_CLASSES = 10
MODEL_DIM = N_CLASSES * N_FEATURES + N_CLASSES


def logsumexp(z: np.ndarray, axis: int = -1, keepdims: bool = False) -> np.ndarray:
    m = z.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(z - m).sum(axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def model_dim(n_features: int = N_FEATURES, n_classes: int = N_CLASSES) -> int:
    return n_classes * n_features + n_classes


def n_classes_for(w: np.ndarray, n_features: int) -> int:
    c, rem = divmod(np.size(w), n_features + 1)
    if rem or c < 1:
        raise InvalidInputError(
            f"parameter length {np.size(w)} is not classes*(features+1) for {n_features} features"
        )
    return c


def unpack(w: np.ndarray, n_features: int) -> tuple[np.ndarray, np.ndarray]:
    c = n_classes_for(w, n_features)
    w = np.asarray(w, dtype=float)
    return w[: c * n_features].reshape(c, n_features), w[c * n_features :]


def _check(w, X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("features must be a non-empty 2-D array")
    if y.shape != (X.shape[0],):
        raise InvalidInputError("labels must be 1-D with one entry per sample")
    W, b = unpack(w, X.shape[1])
    if y.size and (y.min() < 0 or y.max() >= b.size):
        raise InvalidInputError(f"labels must lie in [0, {b.size})")
    return W, b, X, y.astype(np.intp)


def predict_proba(w, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    W, b = unpack(w, X.shape[1])
    z = X @ W.T + b
    return np.exp(z - logsumexp(z, axis=1, keepdims=True))


def loss(w, X, y, reg: float = 0.5) -> float:
    """Mean softmax cross-entropy plus ``reg/2 * ||w||^2``."""
    W, b, X, y = _check(w, X, y)
    z = X @ W.T + b
    ce = np.mean(logsumexp(z, axis=1) - z[np.arange(y.size), y])
    return float(ce + 0.5 * reg * np.dot(w, w))


def loss_and_grad(w, X, y, reg: float = 0.5) -> tuple[float, np.ndarray]:
    W, b, X, y = _check(w, X, y)
    n = y.size
    z = X @ W.T + b
    lse = logsumexp(z, axis=1)
    ce = np.mean(lse - z[np.arange(n), y])
    r = np.exp(z - lse[:, None])
    r[np.arange(n), y] -= 1.0
    r /= n
    grad = np.concatenate([(r.T @ X).ravel(), r.sum(axis=0)]) + reg * np.asarray(w, dtype=float)
    return float(ce + 0.5 * reg * np.dot(w, w)), grad


def grad(w, X, y, reg: float = 0.5) -> np.ndarray:
    return loss_and_grad(w, X, y, reg)[1]


def hessian_vector(w, X, v, reg: float = 0.0) -> np.ndarray:
    """Hessian of the mean cross-entropy (plus ``reg * I``) applied to ``v``."""
    X = np.asarray(X, dtype=float)
    W, b = unpack(w, X.shape[1])
    V, vb = unpack(v, X.shape[1])
    p = predict_proba(w, X)
    dz = X @ V.T + vb
    s = p * (dz - np.sum(p * dz, axis=1, keepdims=True)) / X.shape[0]
    return np.concatenate([(s.T @ X).ravel(), s.sum(axis=0)]) + reg * np.asarray(v, dtype=float)


def clip(v: np.ndarray, bound: float) -> np.ndarray:
    """Scale ``v`` down to norm ``bound`` if it is longer; direction is kept."""
    norm = float(np.linalg.norm(v))
    if norm > bound:
        return v * (bound / norm)
    return v
