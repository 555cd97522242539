"""Heterogeneous synthetic classification data spread over FL devices."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import _rng
from ..errors import InvalidConfigError, InvalidInputError
from .model import N_CLASSES, N_FEATURES


def power_law_sizes(
    k_devices: int,
    total: int,
    exponent: float = 1.5,
    min_size: int = 32,
    seed: int = 0,
) -> np.ndarray:
    """Local dataset sizes with a heavy-tailed (Pareto) spread.

    Raw shares are Pareto draws with tail index ``exponent``
    (``P(X > x) = x^-exponent`` for ``x >= 1``).  Every device first gets
    ``min_size`` samples and the remainder is split in proportion to the
    shares by largest remainder, so the sizes sum to ``total`` exactly.
    Large exponents give nearly equal sizes.
    """
    k_devices, total, min_size = int(k_devices), int(total), int(min_size)
    if k_devices < 1 or min_size < 1:
        raise InvalidConfigError("need at least one device and min_size >= 1")
    if total < k_devices * min_size:
        raise InvalidConfigError(
            f"total={total} cannot give {k_devices} devices at least {min_size} samples each"
        )
    if not exponent > 0:
        raise InvalidConfigError("power-law exponent must be positive")
    rng = _rng.keyed(seed, _rng.SIZES)
    shares = rng.pareto(exponent, size=k_devices) + 1.0
    extra = total - k_devices * min_size
    ideal = extra * shares / shares.sum()
    base = np.floor(ideal).astype(np.int64)
    short = extra - int(base.sum())
    order = np.argsort(-(ideal - base), kind="stable")
    base[order[:short]] += 1
    return base + min_size


@dataclass
class SyntheticDataset:
    """Per-device features and labels plus the generator metadata."""

    features: list[np.ndarray]
    labels: list[np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.features) != len(self.labels) or not self.features:
            raise InvalidInputError("need matching, non-empty feature and label lists")
        for X, y in zip(self.features, self.labels):
            if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
                raise InvalidInputError("each device needs a non-empty (n, features) block")

    @property
    def n_devices(self) -> int:
        return len(self.features)

    @property
    def n_features(self) -> int:
        return self.features[0].shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.meta.get("n_classes", N_CLASSES))

    @property
    def sizes(self) -> np.ndarray:
        return np.array([y.size for y in self.labels])

    @property
    def weights(self) -> np.ndarray:
        s = self.sizes
        return s / s.sum()

    def pooled(self) -> tuple[np.ndarray, np.ndarray]:
        return np.concatenate(self.features), np.concatenate(self.labels)

    def device(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self.features[k], self.labels[k]

    def save(self, path) -> None:
        """Write a self-describing ``.npz`` snapshot."""
        arrays = {f"X{k}": X for k, X in enumerate(self.features)}
        arrays.update({f"y{k}": y for k, y in enumerate(self.labels)})
        header = dict(self.meta, n_devices=self.n_devices, n_features=self.n_features,
                      sizes=self.sizes.tolist(), format="cflit-dataset/1")
        np.savez_compressed(path, __meta__=np.array(json.dumps(header, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path) -> "SyntheticDataset":
        with np.load(Path(path), allow_pickle=False) as npz:
            meta = json.loads(str(npz["__meta__"]))
            if meta.get("format") != "cflit-dataset/1":
                raise InvalidInputError(f"{path} is not a cflit dataset snapshot")
            K = meta["n_devices"]
            feats = [npz[f"X{k}"] for k in range(K)]
            labs = [npz[f"y{k}"] for k in range(K)]
        for key in ("n_devices", "n_features", "sizes", "format"):
            meta.pop(key, None)
        return cls(feats, labs, meta)


def generate_synthetic(
    alpha: float = 1.0,
    beta: float = 1.0,
    k_devices: int = 20,
    total_samples: int = 10_000,
    power_law_exponent: float = 1.5,
    seed: int = 0,
    *,
    min_size: int = 32,
    n_features: int = N_FEATURES,
    n_classes: int = N_CLASSES,
) -> SyntheticDataset:
    """Softmax-generated data with model (``alpha``) and feature (``beta``) skew.

    Device k draws ``u_k ~ N(0, alpha)`` and ``B_k ~ N(0, beta)``; its label
    model has entries ``N(u_k, 1)``; feature j is ``N(v_k[j], j^-1.2)`` with
    ``v_k ~ N(B_k, 1)``; labels are the argmax of the logits.
    """
    if alpha < 0 or beta < 0:
        raise InvalidConfigError("alpha and beta are variances and must be non-negative")
    if int(k_devices) < 1 or int(total_samples) < int(k_devices):
        raise InvalidConfigError("need k_devices >= 1 and total_samples >= k_devices")
    min_size = min(int(min_size), int(total_samples) // int(k_devices))
    sizes = power_law_sizes(k_devices, total_samples, power_law_exponent, min_size, seed)
    var = np.arange(1, n_features + 1, dtype=float) ** -1.2
    feats, labs = [], []
    for k, n in enumerate(sizes):
        rng = _rng.keyed(seed, _rng.DATASET, k)
        u = rng.normal(0.0, np.sqrt(alpha))
        Bk = rng.normal(0.0, np.sqrt(beta))
        W = rng.normal(u, 1.0, size=(n_classes, n_features))
        b = rng.normal(u, 1.0, size=n_classes)
        v = rng.normal(Bk, 1.0, size=n_features)
        X = v + rng.standard_normal((int(n), n_features)) * np.sqrt(var)
        feats.append(X)
        labs.append(np.argmax(X @ W.T + b, axis=1).astype(np.int64))
    meta = dict(alpha=alpha, beta=beta, seed=int(seed), power_law_exponent=power_law_exponent,
                min_size=min_size, n_classes=n_classes)
    return SyntheticDataset(feats, labs, meta)
