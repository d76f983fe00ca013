"""Scikit-learn style estimator facade over the training pipeline.

X is a list of MaskedSample; labels ride on the samples, so ``y`` is
optional and, when given, must agree with the sample labels.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .corpus import MaskedSample
from .errors import DataError
from .model import TrainConfig
from .trainer import _batched_probs, train


def check_samples(X, require_labels: bool = False) -> list[MaskedSample]:
    if not isinstance(X, (list, tuple)) or not X:
        raise DataError("X must be a non-empty list of MaskedSample")
    for s in X:
        if not isinstance(s, MaskedSample):
            raise DataError(f"expected MaskedSample, got {type(s).__name__}")
        if require_labels and s.label is None:
            raise DataError(f"sample {s.id} is unlabeled")
    return list(X)


class EuphemismIdentifier(BaseEstimator, ClassifierMixin):
    """Predicts the target-keyword category of masked samples."""

    def __init__(self, d_g=32, d_v=32, d_s=32, d_t=32, epochs=30, lr=5e-3,
                 batch_size=128, seed=0, tau=0.07, alpha=1.0, beta=0.1,
                 gamma=0.1, share_an=True, use_images=True, use_speech=True,
                 cfa=True, ca=True, gu=True, sa=True, warmup_steps=0,
                 weight_decay=0.0, patience=5, tables=None, categories=None):
        self.d_g = d_g
        self.d_v = d_v
        self.d_s = d_s
        self.d_t = d_t
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed
        self.tau = tau
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.share_an = share_an
        self.use_images = use_images
        self.use_speech = use_speech
        self.cfa = cfa
        self.ca = ca
        self.gu = gu
        self.sa = sa
        self.warmup_steps = warmup_steps
        self.weight_decay = weight_decay
        self.patience = patience
        self.tables = tables
        self.categories = categories

    def _config(self) -> TrainConfig:
        return TrainConfig(
            d_g=self.d_g, d_v=self.d_v, d_s=self.d_s, d_t=self.d_t,
            epochs=self.epochs, lr=self.lr, batch_size=self.batch_size,
            seed=self.seed, tau=self.tau, alpha=self.alpha, beta=self.beta,
            gamma=self.gamma, share_an=self.share_an,
            use_images=self.use_images, use_speech=self.use_speech,
            cfa=self.cfa, ca=self.ca, gu=self.gu, sa=self.sa,
            warmup_steps=self.warmup_steps, weight_decay=self.weight_decay,
            patience=self.patience)

    def fit(self, X, y=None):
        samples = check_samples(X, require_labels=True)
        if y is not None:
            got = [s.label for s in samples]
            if list(y) != got:
                raise DataError("y disagrees with the labels on the samples")
        n_cats = max(s.label for s in samples) + 1
        cats = self.categories or [f"cat{i}" for i in range(n_cats)]
        result = train(self._config(), samples, [], self.tables or {}, cats)
        self.model_ = result.model
        self.classes_ = np.arange(len(cats))
        return self

    def predict_proba(self, X):
        samples = check_samples(X)
        return _batched_probs(self.model_, samples, self.tables or {})

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def score(self, X, y=None):
        samples = check_samples(X, require_labels=True)
        preds = self.predict(samples)
        golds = np.array([s.label for s in samples])
        return float((preds == golds).mean())
