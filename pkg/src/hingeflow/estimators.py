"""Estimator wrappers around the functional core.

These follow the scikit-learn conventions (constructor stores
hyperparameters verbatim, fit validates and learns, fitted attributes
carry trailing underscores) so the trainers compose with pipelines,
grid search, and cloning. The functional API remains the primary
surface; these are adapters.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import neural
from .exceptions import HingeflowError
from .geometry import Dataset, solve_max_margin
from .optimizer import TrainConfig, train


def _binary_dataset(X, y):
    """Validated arrays plus a -1/+1 dataset; returns (dataset, classes)."""
    X, y = check_X_y(X, y, dtype=np.float64)
    classes = np.unique(y)
    if classes.shape[0] != 2:
        raise ValueError(f"expected exactly 2 classes, got {classes.shape[0]}")
    signed = np.where(y == classes[1], 1.0, -1.0)
    return Dataset(X, signed, allow_duplicates=True), classes


class MaxMarginClassifier(ClassifierMixin, BaseEstimator):
    """Exact hard-margin linear classifier (no bias term).

    Solves the margin problem by support-subset enumeration, so it is
    meant for small n and d; the fitted certificate exposes the margin,
    the support set, and the biorthogonal support functionals.
    """

    def fit(self, X, y):
        data, self.classes_ = _binary_dataset(X, y)
        self.certificate_ = solve_max_margin(data)
        self.coef_ = self.certificate_.u_bar.copy()
        self.margin_ = self.certificate_.gamma
        self.n_features_in_ = data.d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]


class CompleteHingeClassifier(ClassifierMixin, BaseEstimator):
    """Linear classifier trained by hinge descent with a moving threshold.

    After fitting, trace_ holds the recorded run (threshold growth,
    margin gaps when the data is small enough for the exact oracle) and
    certificate_ the exact separator when one was computable.
    """

    def __init__(self, eta=0.01, alpha=1.0, zeta=0.0, max_iters=10_000,
                 loss="complete_hinge", record_every=None, compute_certificate=True):
        self.eta = eta
        self.alpha = alpha
        self.zeta = zeta
        self.max_iters = max_iters
        self.loss = loss
        self.record_every = record_every
        self.compute_certificate = compute_certificate

    def fit(self, X, y):
        data, self.classes_ = _binary_dataset(X, y)
        config = TrainConfig(
            eta=self.eta, alpha=self.alpha, zeta=self.zeta,
            max_iters=self.max_iters, loss=self.loss,
            record_every=self.record_every,
        )
        self.certificate_ = None
        if self.compute_certificate:
            try:
                self.certificate_ = solve_max_margin(data)
            except HingeflowError:
                self.certificate_ = None
        self.trace_ = train(data, config, self.certificate_)
        self.coef_ = self.trace_.final_u.copy()
        self.n_iter_ = self.max_iters
        self.n_features_in_ = data.d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]


class HingeMLPClassifier(ClassifierMixin, BaseEstimator):
    """2-layer ReLU network trained with the pairwise-margin loss or
    cross-entropy, by plain mini-batch SGD."""

    def __init__(self, eta=0.1, alpha=10.0, zeta=0.0, max_iters=2000,
                 batch_size=100, hidden=128, seed=0,
                 loss="multiclass_complete_hinge", record_every=None):
        self.eta = eta
        self.alpha = alpha
        self.zeta = zeta
        self.max_iters = max_iters
        self.batch_size = batch_size
        self.hidden = hidden
        self.seed = seed
        self.loss = loss
        self.record_every = record_every

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if self.classes_.shape[0] < 2:
            raise ValueError("need at least 2 classes")
        indices = np.searchsorted(self.classes_, y)
        data = Dataset(X, indices, allow_duplicates=True)
        config = neural.MlpConfig(
            eta=self.eta, alpha=self.alpha, zeta=self.zeta,
            max_iters=self.max_iters, batch_size=self.batch_size,
            hidden=self.hidden, seed=self.seed, record_every=self.record_every,
        )
        self.trace_, self.params_ = neural.train_mlp(data, self.loss, config)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        labels = np.zeros(X.shape[0], dtype=np.int64)
        return neural.forward(self.params_, neural.MiniBatch(X, labels))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
