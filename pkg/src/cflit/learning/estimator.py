"""scikit-learn wrapper around the over-the-air training loop."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from ..fl import FLConfig, run_over_the_air
from .data import SyntheticDataset
from .model import predict_proba, unpack


class OverTheAirFLClassifier(ClassifierMixin, BaseEstimator):
    """Softmax regression trained by federated SGD with analog aggregation.

    ``fit`` splits the samples across ``n_devices`` simulated devices, either
    by ``groups`` or in contiguous chunks, and runs ``n_rounds`` rounds of
    ``tau`` local steps each.  The fitted model is the ``(gamma + t)^2``
    weighted average of the iterates when ``use_average`` is true.
    """

    def __init__(self, tau=6, n_rounds=200, n_devices=10, batch=32, clip=1.0, reg=0.5,
                 gamma=1000.0, noise_var=0.1, power_cap=1.0, base_lr=0.05,
                 schedule="paper", compressed_dim=None, use_average=True, random_state=0):
        self.tau = tau
        self.n_rounds = n_rounds
        self.n_devices = n_devices
        self.batch = batch
        self.clip = clip
        self.reg = reg
        self.gamma = gamma
        self.noise_var = noise_var
        self.power_cap = power_cap
        self.base_lr = base_lr
        self.schedule = schedule
        self.compressed_dim = compressed_dim
        self.use_average = use_average
        self.random_state = random_state

    def _config(self, batch) -> FLConfig:
        return FLConfig(
            tau=self.tau, n_rounds=self.n_rounds, batch=batch, clip=self.clip,
            reg=self.reg, gamma=self.gamma, noise_var=self.noise_var,
            power_cap=self.power_cap, schedule=self.schedule, base_lr=self.base_lr,
            compressed_dim=self.compressed_dim, eval_every=max(1, self.n_rounds),
        )

    def fit(self, X, y, groups=None):
        X, y = validate_data(self, X, y)
        check_classification_targets(y)
        if len(y) < 2:
            raise ValueError(f"n_samples={len(y)}: need at least two samples")
        self.classes_, codes = np.unique(y, return_inverse=True)
        if groups is None:
            parts = np.array_split(np.arange(len(y)), min(self.n_devices, len(y)))
        else:
            groups = np.asarray(groups)
            parts = [np.flatnonzero(groups == g) for g in np.unique(groups)]
        data = SyntheticDataset([X[p] for p in parts], [codes[p] for p in parts],
                                {"n_classes": len(self.classes_)})
        seed = 0 if self.random_state is None else int(self.random_state)
        # small devices take smaller minibatches
        batch = min(int(self.batch), int(data.sizes.min()))
        trace = run_over_the_air(data, self._config(batch), seed)
        self.trace_ = trace
        self.coef_vector_ = trace.averaged_weights if self.use_average else trace.weights
        self.coef_, self.intercept_ = unpack(self.coef_vector_, X.shape[1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_vector_")
        X = validate_data(self, X, reset=False)
        return predict_proba(self.coef_vector_, X)

    def predict(self, X):
        check_is_fitted(self, "coef_vector_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
