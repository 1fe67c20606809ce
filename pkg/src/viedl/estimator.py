"""scikit-learn compatible wrapper around the training loop."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted, validate_data

from .data import Dataset
from .loss import LossConfig
from .train import TrainConfig, fit, init_state, train_epoch


class EvidentialClassifier(ClassifierMixin, BaseEstimator):
    """Dirichlet evidential classifier with a cosine prototype head.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int, default=(32, 32)
    feature_dim : int, default=16
        Width of the embedding fed to the prototype head.
    activation : {"relu", "tanh", "identity"}, default="relu"
    epochs : int, default=30
    batch_size : int, default=32
    learning_rate : float, default=1e-3
    beta : float, default=0.1
        Weight of the KL term.
    prior : array-like of shape (n_classes,) or None
        Dirichlet prior; None means all ones.
    warmup_epochs : int, default=20
        The KL weight ramps as min(1, epoch / warmup_epochs).
    optimizer : {"adam", "sgd"}, default="adam"
    loss : {"vi", "edl"}, default="vi"
        "edl" trains with the classic masked-KL evidential loss instead.
    standardize : bool, default=True
    random_state : int, default=0

    Attributes
    ----------
    classes_ : ndarray of shape (n_classes,)
    state_ : TrainState
    history_ : list of dict
        Per-epoch training log.
    """

    def __init__(
        self,
        hidden_layer_sizes=(32, 32),
        feature_dim=16,
        activation="relu",
        epochs=30,
        batch_size=32,
        learning_rate=1e-3,
        beta=0.1,
        prior=None,
        warmup_epochs=20,
        optimizer="adam",
        loss="vi",
        standardize=True,
        random_state=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.feature_dim = feature_dim
        self.activation = activation
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta = beta
        self.prior = prior
        self.warmup_epochs = warmup_epochs
        self.optimizer = optimizer
        self.loss = loss
        self.standardize = standardize
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            loss=LossConfig(self.beta, self.prior, self.warmup_epochs),
            seed=self.random_state,
            optimizer=self.optimizer,
            hidden=tuple(self.hidden_layer_sizes),
            feature_dim=self.feature_dim,
            activation=self.activation,
            loss_kind=self.loss,
            standardize=self.standardize,
        )

    def _encode(self, y):
        unknown = np.setdiff1d(y, self.classes_)
        if unknown.size:
            raise ValueError(f"labels {unknown.tolist()} not seen in classes_")
        return np.searchsorted(self.classes_, y)

    def _check_classes(self):
        if len(self.classes_) < 2:
            raise ValueError("need samples of at least two classes; got 1 class")
        if self.prior is not None and len(self.prior) != len(self.classes_):
            raise ValueError("prior length must equal the number of classes")

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        self._check_classes()
        self.state_ = fit(Dataset(X, self._encode(y)), self._config())
        self.history_ = self.state_.log
        return self

    def partial_fit(self, X, y, classes=None):
        """One epoch on (X, y); the first call needs ``classes`` unless fit was called."""
        first = not hasattr(self, "state_")
        X, y = validate_data(self, X, y, dtype=np.float64, reset=first)
        cfg = self._config()
        if first:
            if classes is None:
                raise ValueError("classes must be passed on the first call to partial_fit")
            self.classes_ = unique_labels(classes)
            self._check_classes()
            self.state_ = init_state(X.shape[1], len(self.classes_), cfg, Dataset(X))
            self.history_ = self.state_.log
        train_epoch(self.state_, Dataset(X, self._encode(y)), cfg)
        return self

    def _alpha(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return self.state_.alpha(X)

    def predict_alpha(self, X):
        return self._alpha(X)[0]

    def predict_evidence(self, X):
        return self._alpha(X)[1]

    def predict_proba(self, X):
        alpha = self.predict_alpha(X)
        return alpha / alpha.sum(axis=1, keepdims=True)

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def predict_uncertainty(self, X):
        """Epistemic uncertainty ||lambda||_1 / S per sample."""
        alpha = self.predict_alpha(X)
        return self.state_.prior.sum() / alpha.sum(axis=1)
