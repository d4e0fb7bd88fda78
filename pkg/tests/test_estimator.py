import numpy as np
import pandas as pd
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from oracles import DATA, best_tree_objective
from sparse_regtree import Binarizer, load_csv
from sparse_regtree.estimator import OptimalRegressionTree


def test_params_round_trip():
    est = OptimalRegressionTree(regularization=0.1, depth_limit=3)
    assert est.get_params()["depth_limit"] == 3
    est.set_params(bound="equiv")
    assert clone(est).get_params()["bound"] == "equiv"


def test_fit_predict_matches_oracle():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 2, (20, 4))
    y = rng.normal(size=20) + X[:, 1]
    est = OptimalRegressionTree(regularization=0.02, depth_limit=3).fit(X, y)
    assert est.status_ == "optimal"
    assert est.objective_ == pytest.approx(best_tree_objective(X, y, 0.02, 3), abs=1e-9)
    mse = np.mean((est.predict(X) - y) ** 2)
    assert mse + 0.02 * est.n_leaves_ == pytest.approx(est.objective_)
    assert est.score(X, y) == pytest.approx(1 - mse / np.var(y))
    assert est.depth_ <= 3


def test_rejects_non_binary_and_wrong_width():
    with pytest.raises(ValueError):
        OptimalRegressionTree().fit(np.array([[0.5], [1.0]]), [1.0, 2.0])
    est = OptimalRegressionTree().fit(np.array([[0, 1], [1, 0]]), [1.0, 2.0])
    with pytest.raises(ValueError):
        est.predict(np.zeros((1, 3)))


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        OptimalRegressionTree().predict(np.zeros((1, 2)))


def test_pipeline_with_binarizer():
    raw = load_csv(DATA / "airquality.csv", "Ozone")
    lam = 0.035 * np.var(raw.target)
    pipe = make_pipeline(Binarizer(buckets=4, categorical=["Month"]), OptimalRegressionTree(regularization=lam))
    pipe.fit(raw.columns, raw.target)
    est = pipe[-1]
    assert est.n_leaves_ == 6
    assert np.mean((pipe.predict(raw.columns) - raw.target) ** 2) == pytest.approx(247.5, abs=0.5)


def test_dataframe_feature_names_reach_tree():
    X = pd.DataFrame({"hot": [1, 1, 0, 0], "windy": [0, 1, 0, 1]})
    est = OptimalRegressionTree(regularization=0.01).fit(X, [5.0, 5.0, 1.0, 1.0])
    assert est.tree_.feature_names == ["hot", "windy"]
    assert est.feature_names_in_.tolist() == ["hot", "windy"]
