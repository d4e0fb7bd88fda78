import numpy as np
import pytest

from oracles import best_tree_objective, random_instance
from sparse_regtree import from_arrays
from sparse_regtree.bounds import (
    BoundConfig,
    SubproblemStats,
    equivalent_points_bound,
    kmeans_equiv_bound,
    leaf_objective,
    max_clusters,
    split_lower_bound,
)


def test_leaf_objective_hand_computed():
    stats = SubproblemStats.from_groups([[1.0, 3.0], [5.0]])
    cfg = BoundConfig(lam=0.5, n_total=10)
    # mean 3, SSE 4 + 0 + 4 = 8
    assert leaf_objective(stats, cfg) == pytest.approx(0.8 + 0.5)
    assert stats.leaf_sse == pytest.approx(8.0)
    assert stats.target_sum == pytest.approx(9.0)
    assert stats.target_sq_sum == pytest.approx(35.0)


def test_equivalent_points_bound_is_within_set_loss():
    stats = SubproblemStats.from_groups([[1.0, 3.0], [5.0, 5.0]])
    cfg = BoundConfig(lam=0.1, n_total=4)
    assert equivalent_points_bound(stats, cfg) == pytest.approx(2.0 / 4 + 0.1)


def test_kmeans_bound_separates_distant_groups():
    stats = SubproblemStats.from_groups([[0.0, 0.0], [10.0, 10.0]])
    cfg = BoundConfig(lam=0.1, n_total=4)
    # two clusters cost nothing but two penalties
    assert kmeans_equiv_bound(stats, cfg) == pytest.approx(0.2)
    assert equivalent_points_bound(stats, cfg) == pytest.approx(0.1)


def test_kmeans_bound_never_below_equivalent_points_bound():
    rng = np.random.default_rng(5)
    for _ in range(200):
        k = int(rng.integers(1, 8))
        groups = [rng.normal(size=int(rng.integers(1, 5))) * 3 for _ in range(k)]
        stats = SubproblemStats.from_groups(groups)
        cfg = BoundConfig(lam=float(rng.choice([0.0, 0.01, 0.1, 1.0])), n_total=30)
        assert kmeans_equiv_bound(stats, cfg) >= equivalent_points_bound(stats, cfg) - 1e-12
        assert kmeans_equiv_bound(stats, cfg) <= leaf_objective(stats, cfg) + 1e-12


def test_depth_budget_caps_clusters():
    groups = [[float(i)] for i in range(0, 80, 10)]
    stats = SubproblemStats.from_groups(groups)
    free = kmeans_equiv_bound(stats, BoundConfig(lam=0.0, n_total=8))
    capped = kmeans_equiv_bound(stats, BoundConfig(lam=0.0, n_total=8, depth_budget=1))
    assert free == pytest.approx(0.0)
    assert capped > 0
    assert max_clusters(1) == 2
    assert max_clusters(0) == 1
    assert max_clusters(None) > 2**60


def test_bounds_are_valid_on_random_subproblems():
    rng = np.random.default_rng(21)
    checked = 0
    while checked < 200:
        X, y = random_instance(rng, n_max=16, m_max=4)
        n = len(y)
        data = from_arrays(X, y)
        rows = np.flatnonzero(rng.random(n) < 0.7)
        if rows.size == 0:
            continue
        lam = float(rng.choice([0.005, 0.02, 0.1]))
        depth = rng.choice([None, 1, 2, 3])
        depth = None if depth is None else int(depth)
        opt = best_tree_objective(X[rows], y[rows], lam, depth, n_total=n)
        stats = SubproblemStats.from_dataset(data, rows)
        cfg = BoundConfig(lam=lam, n_total=n, depth_budget=depth)
        tol = 1e-12 * max(1.0, opt)
        assert equivalent_points_bound(stats, cfg) <= opt + tol
        assert kmeans_equiv_bound(stats, cfg) <= opt + tol
        checked += 1


def test_split_bound_adds_children_and_rejects_overlap():
    left = SubproblemStats.from_groups([[1.0, 2.0]], members=[0])
    right = SubproblemStats.from_groups([[7.0]], members=[1])
    cfg = BoundConfig(lam=0.05, n_total=3, use_kmeans_bound=False)
    assert split_lower_bound(left, right, cfg) == pytest.approx(0.5 / 3 + 0.1)
    with pytest.raises(ValueError):
        split_lower_bound(left, SubproblemStats.from_groups([[3.0]], members=[0]), cfg)


def test_empty_support_and_bad_config():
    empty = SubproblemStats(np.array([]), np.array([]), np.array([]))
    cfg = BoundConfig(lam=0.1, n_total=3)
    for fn in (leaf_objective, equivalent_points_bound, kmeans_equiv_bound):
        with pytest.raises(ValueError):
            fn(empty, cfg)
    with pytest.raises(ValueError):
        BoundConfig(lam=-1.0, n_total=3)
    with pytest.raises(ValueError):
        BoundConfig(lam=0.1, n_total=0)
