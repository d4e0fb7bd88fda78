"""Loading, binarization and equivalent-point grouping.

Continuous columns are cut into equal-width buckets over their observed range;
every bucket except the lowest (the reference interval) becomes an indicator
``lo < x <= hi``.  Categorical columns are one-hot encoded; by default every
level gets an indicator, and ``drop_first_level=True`` drops the first level
(sorted order) as a reference instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

__all__ = [
    "RawDataset",
    "FeatureMeta",
    "EquivalentSet",
    "BinaryDataset",
    "Binarizer",
    "DataError",
    "load_csv",
    "read_frame",
    "encode",
    "binarize",
    "group_equivalent_points",
    "from_arrays",
]


class DataError(ValueError):
    """Input data cannot be used (unreadable, empty, non-numeric target...)."""


@dataclass
class RawDataset:
    columns: pd.DataFrame
    target: np.ndarray
    target_name: str = "y"

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float64)
        if len(self.columns) != len(self.target):
            raise DataError("feature columns and target differ in length")

    @property
    def n_rows(self) -> int:
        return len(self.target)


def read_frame(path) -> pd.DataFrame:
    """Read a UTF-8 CSV with a header, dropping a leading unnamed index column."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, encoding="utf-8", skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    # unnamed leading column is a row index written by R / pandas
    first = frame.columns[0]
    if str(first) == "" or str(first).startswith("Unnamed"):
        frame = frame.drop(columns=first)
    return frame


def load_csv(path, target_column: str | None = None) -> RawDataset:
    """Read a comma-delimited file with a header row.

    ``target_column`` defaults to the last column.  Rows with any missing value
    are dropped; the remaining rows keep their order.
    """
    frame = read_frame(path)
    if frame.shape[1] < 2:
        raise DataError(f"{path} needs at least one feature column and a target")
    if target_column is None:
        target_column = frame.columns[-1]
    if target_column not in frame.columns:
        raise DataError(f"target column {target_column!r} not found in {path}")
    frame = frame.replace(r"^\s*$", np.nan, regex=True).dropna(axis=0, how="any")
    if len(frame) == 0:
        raise DataError(f"{path} has no complete rows")
    target = pd.to_numeric(frame[target_column], errors="coerce")
    if target.isna().any():
        raise DataError(f"target column {target_column!r} is not numeric")
    cols = frame.drop(columns=target_column).reset_index(drop=True)
    return RawDataset(columns=cols, target=target.to_numpy(np.float64), target_name=str(target_column))


@dataclass(frozen=True)
class FeatureMeta:
    """Where a binary column came from."""

    source: str
    kind: str  # "interval", "category" or "binary"
    predicate: str
    lower: float | None = None
    upper: float | None = None
    level: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureMeta":
        try:
            return cls(**d)
        except TypeError as exc:
            raise DataError(f"bad feature description {d!r}") from exc


@dataclass(frozen=True)
class EquivalentSet:
    member_indices: np.ndarray
    target_mean: float
    equivalence_loss: float  # within-group SSE divided by the dataset size

    @property
    def size(self) -> int:
        return len(self.member_indices)


@dataclass
class BinaryDataset:
    """Binary feature matrix plus targets and equivalent-point groups.

    ``class_of`` maps each sample to its equivalent set; the per-set arrays
    (``class_rows``, ``class_size``, ``class_mean``, ``class_sse``) are what the
    solver works with.
    """

    features: np.ndarray
    targets: np.ndarray
    feature_meta: list[FeatureMeta] = field(default_factory=list)
    target_name: str = "y"

    def __post_init__(self):
        X = np.asarray(self.features)
        if X.ndim != 2:
            raise DataError("features must be a 2D array")
        if X.size and not np.isin(X, (0, 1)).all():
            raise DataError("features must be binary")
        self.features = X.astype(bool)
        self.targets = np.asarray(self.targets, dtype=np.float64).ravel()
        if self.features.shape[0] != self.targets.shape[0]:
            raise DataError("feature rows and targets differ in length")
        if self.features.shape[0] == 0:
            raise DataError("dataset is empty")
        if not np.all(np.isfinite(self.targets)):
            raise DataError("targets must be finite")
        if not self.feature_meta:
            self.feature_meta = [
                FeatureMeta(source=f"x{j}", kind="binary", predicate=f"x{j} = 1")
                for j in range(self.features.shape[1])
            ]
        if len(self.feature_meta) != self.features.shape[1]:
            raise DataError("feature_meta must have one entry per column")
        self._group()

    def _group(self):
        packed = np.packbits(self.features, axis=1) if self.n_features else np.zeros((self.n_samples, 0), np.uint8)
        _, first, inverse = np.unique(packed, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel()
        # number sets by first appearance so the grouping is order-stable
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        self.class_of = rank[inverse]
        n_cls = order.size
        self.class_rows = self.features[first[order]]
        self.class_size = np.bincount(self.class_of, minlength=n_cls).astype(np.float64)
        sums = np.bincount(self.class_of, weights=self.targets, minlength=n_cls)
        self.class_mean = sums / self.class_size
        resid = self.targets - self.class_mean[self.class_of]
        self.class_sse = np.bincount(self.class_of, weights=resid * resid, minlength=n_cls)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return self.class_rows.shape[0]

    @property
    def equivalent_sets(self) -> list[EquivalentSet]:
        members = [[] for _ in range(self.n_classes)]
        for i, c in enumerate(self.class_of):
            members[c].append(i)
        return [
            EquivalentSet(np.asarray(m), float(self.class_mean[c]), float(self.class_sse[c] / self.n_samples))
            for c, m in enumerate(members)
        ]

    @property
    def feature_names(self) -> list[str]:
        return [m.predicate for m in self.feature_meta]

    def to_csv(self, path) -> None:
        frame = pd.DataFrame(self.features.astype(np.uint8), columns=self.feature_names)
        frame[self.target_name] = self.targets
        frame.to_csv(path, index=False)

    def meta_json(self) -> str:
        return json.dumps([m.to_dict() for m in self.feature_meta], indent=2)

    def subset(self, rows=None, columns=None) -> "BinaryDataset":
        rows = slice(None) if rows is None else rows
        cols = list(range(self.n_features)) if columns is None else list(columns)
        return BinaryDataset(
            self.features[rows][:, cols],
            self.targets[rows],
            [self.feature_meta[j] for j in cols],
            self.target_name,
        )


def from_arrays(X, y, feature_names: Sequence[str] | None = None) -> BinaryDataset:
    X = np.asarray(X)
    meta = None
    if feature_names is not None:
        meta = [FeatureMeta(source=str(n), kind="binary", predicate=str(n)) for n in feature_names]
    return BinaryDataset(X, y, meta or [])


def group_equivalent_points(features, targets) -> list[EquivalentSet]:
    """Partition samples by identical feature rows."""
    return BinaryDataset(np.asarray(features).reshape(len(targets), -1), targets).equivalent_sets


def _fmt(x: float) -> str:
    return f"{float(x):.6g}"


def _is_numeric(series: pd.Series) -> bool:
    return not pd.to_numeric(series, errors="coerce").isna().any()


def _level_name(v) -> str:
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return str(int(v))
    return str(v)


class Binarizer(TransformerMixin, BaseEstimator):
    """Equal-width bucketing of continuous columns and one-hot categoricals.

    Parameters
    ----------
    buckets : int
        Number of equal-width intervals per continuous column.
    categorical : sequence of str, optional
        Column names forced to be categorical.  Non-numeric columns are always
        categorical.
    drop_first_level : bool
        Drop the first (sorted) level of each categorical column.
    thresholds : {"buckets", "adjacent"}
        ``"adjacent"`` emits one ``x <= t`` indicator per midpoint between
        adjacent observed values instead of buckets.
    dedupe : bool
        Drop binary columns identical to an earlier one.
    """

    def __init__(self, buckets=4, categorical=None, drop_first_level=False, thresholds="buckets", dedupe=True):
        self.buckets = buckets
        self.categorical = categorical
        self.drop_first_level = drop_first_level
        self.thresholds = thresholds
        self.dedupe = dedupe

    def fit(self, X, y=None):
        frame = X if isinstance(X, pd.DataFrame) else pd.DataFrame(np.asarray(X))
        if self.buckets < 2:
            raise ValueError("buckets must be at least 2")
        if self.thresholds not in ("buckets", "adjacent"):
            raise ValueError(f"unknown threshold rule {self.thresholds!r}")
        forced = set(self.categorical or ())
        specs = []
        for name in frame.columns:
            col = frame[name]
            if str(name) in forced or name in forced or not _is_numeric(col):
                levels = sorted(pd.unique(col.astype(str) if not _is_numeric(col) else col), key=_sort_key)
                if len(levels) < 2:
                    continue
                if self.drop_first_level:
                    levels = levels[1:]
                for lv in levels:
                    specs.append(FeatureMeta(str(name), "category", f"{name} = {_level_name(lv)}", level=_level_name(lv)))
                continue
            vals = pd.to_numeric(col).to_numpy(np.float64)
            lo, hi = float(vals.min()), float(vals.max())
            if lo == hi:
                continue
            if self.thresholds == "adjacent":
                uniq = np.unique(vals)
                for t in (uniq[:-1] + uniq[1:]) / 2.0:
                    specs.append(FeatureMeta(str(name), "interval", f"{name} <= {_fmt(t)}", upper=float(t)))
                continue
            edges = np.linspace(lo, hi, self.buckets + 1)
            edges[0], edges[-1] = lo, hi
            for k in range(1, self.buckets):
                a, b = float(edges[k]), float(edges[k + 1])
                specs.append(FeatureMeta(str(name), "interval", f"{_fmt(a)} < {name} <= {_fmt(b)}", lower=a, upper=b))
        self.columns_ = list(frame.columns)
        self.candidate_meta_ = specs
        bits = self._encode(frame, specs)
        keep = list(range(len(specs)))
        if self.dedupe and bits.shape[1]:
            _, first = np.unique(np.packbits(bits.T, axis=1), axis=0, return_index=True)
            keep = sorted(first.tolist())
            # a column that never varies cannot split anything
            keep = [j for j in keep if 0 < bits[:, j].sum() < bits.shape[0]]
        if not keep:
            raise DataError("binarization produced no usable features")
        self.keep_ = keep
        self.feature_meta_ = [specs[j] for j in keep]
        return self

    @staticmethod
    def _encode(frame: pd.DataFrame, specs: Iterable[FeatureMeta]) -> np.ndarray:
        specs = list(specs)
        out = np.zeros((len(frame), len(specs)), dtype=bool)
        for j, m in enumerate(specs):
            col = frame[m.source] if m.source in frame.columns else frame[_coerce_name(frame, m.source)]
            if m.kind == "binary":
                out[:, j] = pd.to_numeric(col).to_numpy(np.float64) != 0
            elif m.kind == "category":
                out[:, j] = col.map(_level_name).to_numpy() == m.level
            elif m.lower is None:
                out[:, j] = pd.to_numeric(col).to_numpy(np.float64) <= m.upper
            else:
                v = pd.to_numeric(col).to_numpy(np.float64)
                out[:, j] = (v > m.lower) & (v <= m.upper)
        return out

    def transform(self, X):
        check_is_fitted(self, "feature_meta_")
        frame = X if isinstance(X, pd.DataFrame) else pd.DataFrame(np.asarray(X))
        missing = [c for c in self.columns_ if c not in frame.columns]
        if missing:
            raise DataError(f"columns missing at transform time: {missing}")
        return self._encode(frame, self.feature_meta_).astype(np.uint8)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "feature_meta_")
        return np.array([m.predicate for m in self.feature_meta_], dtype=object)


def encode(frame: pd.DataFrame, feature_meta: Sequence[FeatureMeta]) -> np.ndarray:
    """Apply a fitted binarization (its ``feature_meta``) to raw columns."""
    return Binarizer._encode(frame, feature_meta).astype(np.uint8)


def _coerce_name(frame, name):
    for c in frame.columns:
        if str(c) == name:
            return c
    raise DataError(f"column {name!r} not present")


def _sort_key(v):
    try:
        return (0, float(v), "")
    except (TypeError, ValueError):
        return (1, 0.0, str(v))


def binarize(
    raw: RawDataset,
    buckets_per_continuous: int = 4,
    categorical: Sequence[str] | None = None,
    drop_first_level: bool = False,
    thresholds: str = "buckets",
) -> BinaryDataset:
    """Binarize a raw dataset; see :class:`Binarizer` for the encoding rules."""
    enc = Binarizer(buckets_per_continuous, categorical, drop_first_level, thresholds)
    bits = enc.fit_transform(raw.columns)
    return BinaryDataset(bits, raw.target, enc.feature_meta_, raw.target_name)
