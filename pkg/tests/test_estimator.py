import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score
from sklearn.utils.estimator_checks import parametrize_with_checks

from viedl import EvidentialClassifier
from viedl.data import gaussian_blobs, ood_blob


@parametrize_with_checks([EvidentialClassifier(epochs=15)])
def test_sklearn_conformance(estimator, check):
    check(estimator)


@pytest.fixture(scope="module")
def blobs():
    ds = gaussian_blobs(3, 200, d=2, seed=7)
    return ds.features, np.array(["ant", "bee", "cat"])[ds.labels]


def test_params_round_trip():
    est = EvidentialClassifier(beta=0.3, prior=[1.0, 2.0], hidden_layer_sizes=(4,))
    params = est.get_params()
    assert params["beta"] == 0.3 and params["hidden_layer_sizes"] == (4,)
    twin = clone(est)
    assert twin.get_params()["prior"] == [1.0, 2.0]
    assert est.set_params(epochs=3).epochs == 3


def test_fit_predict_string_labels(blobs):
    X, y = blobs
    est = EvidentialClassifier(random_state=7).fit(X, y)
    assert list(est.classes_) == ["ant", "bee", "cat"]
    assert est.score(X, y) >= 0.98
    proba = est.predict_proba(X)
    assert np.allclose(proba.sum(axis=1), 1.0)
    assert np.array_equal(est.predict(X), est.classes_[proba.argmax(axis=1)])
    u = est.predict_uncertainty(X)
    assert np.all((u > 0) & (u <= 1))
    assert np.allclose(est.predict_alpha(X) - 1.0, est.predict_evidence(X))
    assert len(est.history_) == 30


def test_uncertainty_matches_training_api(blobs):
    from viedl.evaluation import predict

    X, y = blobs
    est = EvidentialClassifier(epochs=5).fit(X, y)
    ood = ood_blob(2, 50, 20.0, seed=8).features
    assert np.allclose(est.predict_uncertainty(ood), predict(est.state_, ood)[2])


def test_deterministic(blobs):
    X, y = blobs
    a = EvidentialClassifier(epochs=4).fit(X, y).predict_alpha(X)
    b = EvidentialClassifier(epochs=4).fit(X, y).predict_alpha(X)
    assert np.array_equal(a, b)


def test_partial_fit(blobs):
    X, y = blobs
    est = EvidentialClassifier()
    with pytest.raises(ValueError):
        est.partial_fit(X, y)
    for _ in range(3):
        est.partial_fit(X, y, classes=["ant", "bee", "cat"])
    assert est.state_.epoch == 3 and len(est.history_) == 3


def test_errors(blobs):
    X, y = blobs
    with pytest.raises(NotFittedError):
        EvidentialClassifier().predict(X)
    with pytest.raises(ValueError, match="prior"):
        EvidentialClassifier(prior=[1.0, 1.0]).fit(X, y)
    est = EvidentialClassifier(epochs=1).fit(X, y)
    with pytest.raises(ValueError):
        est.predict(np.ones((3, 5)))


def test_cross_validation(blobs):
    X, y = blobs
    scores = cross_val_score(EvidentialClassifier(epochs=10), X, y, cv=3)
    assert scores.min() > 0.9
