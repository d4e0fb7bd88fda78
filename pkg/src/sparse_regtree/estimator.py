"""scikit-learn front end for the optimal tree solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .dataset import BinaryDataset, FeatureMeta
from .solver import SolverConfig, solve


class OptimalRegressionTree(RegressorMixin, BaseEstimator):
    """Regression tree minimising training MSE plus ``regularization`` per leaf.

    ``X`` must already be binary (0/1); use :class:`~sparse_regtree.Binarizer`
    in a pipeline for raw columns.

    Parameters
    ----------
    regularization : float
        Penalty per leaf, in units of mean squared error.
    depth_limit : int or None
        Maximum depth; None searches trees of any depth.
    time_limit : float or None
        Seconds before returning the best tree found so far.
    bound : {"kmeans", "equiv"}
        Lower bound used for pruning.  Both give the same tree.
    warm_start : bool
        Seed the search along a greedy path first.  Affects speed only.

    Attributes
    ----------
    tree_ : Tree
    status_ : str
        ``"optimal"``, ``"timeout"`` or ``"memory_limit"``.
    objective_, lower_bound_ : float
    trace_ : list of TraceRecord
    """

    def __init__(self, regularization=0.01, depth_limit=None, time_limit=None, bound="kmeans", warm_start=False):
        self.regularization = regularization
        self.depth_limit = depth_limit
        self.time_limit = time_limit
        self.bound = bound
        self.warm_start = warm_start

    def _config(self) -> SolverConfig:
        return SolverConfig(
            lam=float(self.regularization),
            depth_limit=self.depth_limit,
            time_limit=self.time_limit,
            bound_mode=self.bound,
            warm_start=self.warm_start,
        )

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=None, y_numeric=True)
        if not np.isin(X, (0, 1)).all():
            raise ValueError("OptimalRegressionTree needs binary features; binarize first")
        names = getattr(self, "feature_names_in_", None)
        meta = []
        if names is not None:
            meta = [FeatureMeta(str(n), "binary", str(n)) for n in names]
        data = BinaryDataset(X.astype(bool), y.astype(np.float64), meta)
        result = solve(data, self._config())
        self.tree_ = result.tree
        self.trace_ = result.trace
        self.status_ = result.status
        self.objective_ = result.upper_bound
        self.lower_bound_ = result.lower_bound
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        X = validate_data(self, X, reset=False, dtype=None)
        return self.tree_.predict(X)

    @property
    def n_leaves_(self) -> int:
        check_is_fitted(self, "tree_")
        return self.tree_.leaf_count

    @property
    def depth_(self) -> int:
        check_is_fitted(self, "tree_")
        return self.tree_.depth
