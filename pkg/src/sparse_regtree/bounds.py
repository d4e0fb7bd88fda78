"""Per-subproblem objective bounds.

A subproblem is a set of samples that some tree node must fit on its own.
Its statistics are kept per equivalent set (samples with identical binary
rows), because no tree can separate those.  Losses are raw sums of squares
internally and divided by the dataset size only when an objective is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kmeans1d import _sorted_regularized_min

__all__ = [
    "SubproblemStats",
    "BoundConfig",
    "leaf_objective",
    "equivalent_points_bound",
    "kmeans_equiv_bound",
    "split_lower_bound",
    "max_clusters",
]


@dataclass(frozen=True)
class SubproblemStats:
    """Equivalent-set view of one support.

    ``sizes[k]``, ``means[k]`` and ``sse[k]`` describe the part of the k-th
    equivalent set inside the support.  ``members`` optionally records which
    set ids those are (used only for disjointness checks).
    """

    sizes: np.ndarray
    means: np.ndarray
    sse: np.ndarray
    members: np.ndarray | None = None

    @classmethod
    def from_groups(cls, groups, members=None) -> "SubproblemStats":
        """Build from an iterable of target arrays, one per equivalent set."""
        groups = [np.asarray(g, dtype=np.float64) for g in groups]
        sizes = np.array([g.size for g in groups], dtype=np.float64)
        means = np.array([g.mean() for g in groups])
        sse = np.array([((g - g.mean()) ** 2).sum() for g in groups])
        return cls(sizes, means, sse, None if members is None else np.asarray(members))

    @classmethod
    def from_dataset(cls, data, rows=None) -> "SubproblemStats":
        """Stats of ``rows`` (sample indices, default all) of a BinaryDataset."""
        rows = np.arange(data.n_samples) if rows is None else np.asarray(rows)
        cls_ids = data.class_of[rows]
        uniq, inv = np.unique(cls_ids, return_inverse=True)
        groups = [data.targets[rows[inv == k]] for k in range(uniq.size)]
        return cls.from_groups(groups, members=uniq)

    @property
    def support_size(self) -> float:
        return float(self.sizes.sum())

    @property
    def target_sum(self) -> float:
        return float((self.sizes * self.means).sum())

    @property
    def target_sq_sum(self) -> float:
        return float((self.sse + self.sizes * self.means**2).sum())

    @property
    def leaf_sse(self) -> float:
        w = self.sizes
        mu = (w * self.means).sum() / w.sum()
        return float(self.sse.sum() + (w * (self.means - mu) ** 2).sum())


@dataclass(frozen=True)
class BoundConfig:
    lam: float
    n_total: int
    use_kmeans_bound: bool = True
    depth_budget: int | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.n_total < 1:
            raise ValueError("n_total must be positive")

    @property
    def lam_raw(self) -> float:
        return self.lam * self.n_total


def max_clusters(depth_budget: int | None) -> int:
    """A tree of depth ``d`` has at most ``2**d`` leaves."""
    if depth_budget is None or depth_budget >= 62:
        return 1 << 62
    return 1 << max(depth_budget, 0)


def _nonempty(stats: SubproblemStats):
    if stats.sizes.size == 0 or stats.support_size <= 0:
        raise ValueError("bound requested for an empty support")


def leaf_objective(stats: SubproblemStats, cfg: BoundConfig) -> float:
    """Objective of predicting the support mean with a single leaf."""
    _nonempty(stats)
    return stats.leaf_sse / cfg.n_total + cfg.lam


def equivalent_points_bound(stats: SubproblemStats, cfg: BoundConfig) -> float:
    """Irreducible within-set loss plus one leaf penalty."""
    _nonempty(stats)
    return float(stats.sse.sum()) / cfg.n_total + cfg.lam


def kmeans_equiv_bound(stats: SubproblemStats, cfg: BoundConfig) -> float:
    """Constrained 1D k-Means bound, solved as weighted k-Means on set means.

    Each equivalent set collapses to one point (value = its mean, weight = its
    size); the within-set SSE is added back as a constant correction.
    """
    _nonempty(stats)
    value, _, _ = _sorted_regularized_min(
        stats.means.astype(np.float64),
        stats.sizes.astype(np.float64),
        cfg.lam_raw,
        max_clusters(cfg.depth_budget),
    )
    return (value + float(stats.sse.sum())) / cfg.n_total


def subproblem_bound(stats: SubproblemStats, cfg: BoundConfig) -> float:
    if cfg.use_kmeans_bound:
        return kmeans_equiv_bound(stats, cfg)
    return equivalent_points_bound(stats, cfg)


def split_lower_bound(left: SubproblemStats, right: SubproblemStats, cfg: BoundConfig) -> float:
    """Bound on any tree that first splits the parent into ``left``/``right``."""
    if left.members is not None and right.members is not None:
        if np.intersect1d(left.members, right.members).size:
            raise ValueError("left and right supports overlap")
    return subproblem_bound(left, cfg) + subproblem_bound(right, cfg)
