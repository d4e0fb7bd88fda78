"""Fitted regression tree: routing, metrics and (de)serialization.

Nodes live in flat arrays, sklearn style.  Node 0 is the root; a branch has
``feature >= 0`` and sends samples whose bit is 1 to ``true_child``.  Leaves
have ``feature == -1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Tree", "EvalReport", "predict", "evaluate", "serialize", "deserialize", "render_text", "SchemaError"]

LEAF = -1


class SchemaError(ValueError):
    pass


@dataclass
class Tree:
    feature: list = field(default_factory=list)
    true_child: list = field(default_factory=list)
    false_child: list = field(default_factory=list)
    value: list = field(default_factory=list)
    count: list = field(default_factory=list)
    feature_names: list | None = None
    n_features: int | None = None
    lam: float | None = None
    training_objective: float | None = None

    # -- construction ------------------------------------------------------
    def add_leaf(self, prediction: float, count: int = 0) -> int:
        self.feature.append(LEAF)
        self.true_child.append(LEAF)
        self.false_child.append(LEAF)
        self.value.append(float(prediction))
        self.count.append(int(count))
        return len(self.feature) - 1

    def add_branch(self, feature: int, count: int = 0) -> int:
        self.feature.append(int(feature))
        self.true_child.append(LEAF)
        self.false_child.append(LEAF)
        self.value.append(float("nan"))
        self.count.append(int(count))
        return len(self.feature) - 1

    # -- structure ---------------------------------------------------------
    @property
    def node_count(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    @property
    def leaf_count(self) -> int:
        return sum(1 for f in self.feature if f == LEAF)

    @property
    def depth(self) -> int:
        def rec(n):
            if self.is_leaf(n):
                return 0
            return 1 + max(rec(self.true_child[n]), rec(self.false_child[n]))

        return rec(0) if self.node_count else 0

    def name(self, j: int) -> str:
        if self.feature_names is not None and j < len(self.feature_names):
            return str(self.feature_names[j])
        return f"x{j} = 1"

    # -- routing -----------------------------------------------------------
    def apply(self, X) -> np.ndarray:
        """Index of the leaf each row of ``X`` lands in."""
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        feat = np.asarray(self.feature)
        if X.shape[1] <= feat.max(initial=-1):
            raise ValueError(f"row width {X.shape[1]} too small for feature {feat.max()}")
        node = np.zeros(X.shape[0], dtype=np.int64)
        tc = np.asarray(self.true_child)
        fc = np.asarray(self.false_child)
        Xb = X.astype(bool)
        active = feat[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            bits = Xb[idx, feat[node[idx]]]
            node[idx] = np.where(bits, tc[node[idx]], fc[node[idx]])
            active = feat[node] != LEAF
        return node

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.value)[self.apply(X)]

    # -- equality used by round-trip tests ---------------------------------
    def structure(self):
        def rec(n):
            if self.is_leaf(n):
                return ("leaf", self.value[n], self.count[n])
            return ("branch", self.feature[n], rec(self.true_child[n]), rec(self.false_child[n]))

        return rec(0)


def predict(tree: Tree, row) -> float:
    """Prediction for a single bit vector."""
    row = np.asarray(row)
    if row.ndim != 1:
        raise ValueError("predict expects a single row; use Tree.predict for matrices")
    return float(tree.predict(row[None, :])[0])


@dataclass(frozen=True)
class EvalReport:
    mse: float
    r_squared: float
    n: int


def evaluate(tree: Tree, data) -> EvalReport:
    """MSE and R^2 of ``tree`` on a BinaryDataset (or an ``(X, y)`` pair)."""
    if isinstance(data, tuple):
        X, y = data
    else:
        X, y = data.features, data.targets
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot evaluate on empty data")
    resid = y - tree.predict(X)
    mse = float(np.mean(resid * resid))
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - mse * y.size / sst if sst > 0 else (1.0 if mse == 0 else 0.0)
    return EvalReport(mse=mse, r_squared=r2, n=int(y.size))


# -- JSON ------------------------------------------------------------------


def _to_obj(tree: Tree, n: int) -> dict:
    if tree.is_leaf(n):
        return {"prediction": tree.value[n], "count": tree.count[n]}
    return {
        "feature": tree.feature[n],
        "name": tree.name(tree.feature[n]),
        "count": tree.count[n],
        "true": _to_obj(tree, tree.true_child[n]),
        "false": _to_obj(tree, tree.false_child[n]),
    }


def serialize(tree: Tree) -> str:
    doc = {
        "tree": _to_obj(tree, 0),
        "n_features": tree.n_features,
        "lambda": tree.lam,
        "training_objective": tree.training_objective,
    }
    if tree.feature_names is not None:
        doc["feature_names"] = list(map(str, tree.feature_names))
    # repr-exact floats keep the round trip lossless
    return json.dumps(doc, indent=2, sort_keys=True)


def _from_obj(obj, tree: Tree) -> int:
    if not isinstance(obj, dict):
        raise SchemaError(f"node must be an object, got {type(obj).__name__}")
    if "prediction" in obj:
        pred = obj["prediction"]
        if not isinstance(pred, (int, float)) or isinstance(pred, bool):
            raise SchemaError("leaf prediction must be a number")
        return tree.add_leaf(float(pred), int(obj.get("count", 0)))
    for key in ("feature", "true", "false"):
        if key not in obj:
            raise SchemaError(f"branch node missing {key!r}")
    feat = obj["feature"]
    if not isinstance(feat, int) or isinstance(feat, bool) or feat < 0:
        raise SchemaError("branch feature must be a non-negative integer")
    node = tree.add_branch(feat, int(obj.get("count", 0)))
    tree.true_child[node] = _from_obj(obj["true"], tree)
    tree.false_child[node] = _from_obj(obj["false"], tree)
    return node


def deserialize(text) -> Tree:
    try:
        doc = json.loads(text) if isinstance(text, (str, bytes)) else text
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("model document must be an object")
    root = doc["tree"] if "tree" in doc else doc
    tree = Tree(
        feature_names=doc.get("feature_names"),
        n_features=doc.get("n_features"),
        lam=doc.get("lambda"),
        training_objective=doc.get("training_objective"),
    )
    _from_obj(root, tree)
    return tree


def render_text(tree: Tree, decimals: int = 2) -> str:
    lines = []

    def rec(n, indent, label):
        pad = "  " * indent
        if tree.is_leaf(n):
            lines.append(f"{pad}{label}{tree.value[n]:.{decimals}f}  (n={tree.count[n]})")
            return
        lines.append(f"{pad}{label}{tree.name(tree.feature[n])} ?")
        rec(tree.true_child[n], indent + 1, "T: ")
        rec(tree.false_child[n], indent + 1, "F: ")

    rec(0, 0, "")
    return "\n".join(lines)
