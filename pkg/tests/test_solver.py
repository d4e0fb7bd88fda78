import numpy as np
import pytest

from oracles import best_tree_objective, random_instance, tree_partition
from sparse_regtree import evaluate, from_arrays
from sparse_regtree.solver import (
    Search,
    SolverConfig,
    leaf_budget,
    prune_by_leaf_count,
    solve,
)


def _objective(tree, X, y, lam):
    ev = evaluate(tree, (X, y))
    return ev.mse + lam * tree.leaf_count


def _close(a, b):
    return abs(a - b) <= 1e-9 * max(1.0, abs(b))


def test_perfect_split():
    X = np.array([[0], [0], [0], [1], [1], [1]])
    y = np.array([0.0, 0, 0, 5, 5, 5])
    res = solve(from_arrays(X, y), lam=0.01)
    assert res.status == "optimal"
    assert res.tree.leaf_count == 2
    assert res.upper_bound == pytest.approx(0.02)
    assert sorted(res.tree.predict(X).tolist()) == y.tolist()


def test_large_lambda_gives_single_leaf():
    rng = np.random.default_rng(1)
    X = rng.integers(0, 2, (40, 4))
    y = rng.normal(size=40)
    res = solve(from_arrays(X, y), lam=float(np.var(y)))
    assert res.tree.leaf_count == 1
    assert res.tree.value[0] == pytest.approx(y.mean())


def test_matches_exhaustive_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(30):
        X, y = random_instance(rng)
        lam = float(rng.choice([0.005, 0.02, 0.1]))
        depth = int(rng.integers(1, 4))
        res = solve(from_arrays(X, y), lam=lam, depth_limit=depth)
        want = best_tree_objective(X, y, lam, depth)
        assert abs(res.upper_bound - want) <= 1e-9
        assert abs(_objective(res.tree, X, y, lam) - want) <= 1e-9
        assert res.tree.depth <= depth


def test_unlimited_depth_matches_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(20):
        X, y = random_instance(rng, n_max=14, m_max=4)
        lam = float(rng.choice([0.0, 0.001, 0.05]))
        res = solve(from_arrays(X, y), lam=lam)
        assert _close(res.upper_bound, best_tree_objective(X, y, lam))


def test_zero_lambda_fits_equivalent_set_means():
    rng = np.random.default_rng(4)
    X = rng.integers(0, 2, (30, 3))
    y = rng.normal(size=30)
    data = from_arrays(X, y)
    res = solve(data, lam=0.0)
    assert res.upper_bound == pytest.approx(data.class_sse.sum() / 30, abs=1e-12)


def test_bound_modes_agree():
    rng = np.random.default_rng(5)
    for _ in range(15):
        X, y = random_instance(rng, n_max=40, m_max=6, noise="signal")
        data = from_arrays(X, y)
        a = solve(data, lam=0.01, depth_limit=4, bound_mode="kmeans")
        b = solve(data, lam=0.01, depth_limit=4, bound_mode="equiv")
        assert _close(a.upper_bound, b.upper_bound)
        assert a.expansions <= b.expansions


def test_leaf_count_pruning_changes_only_work():
    rng = np.random.default_rng(6)
    for _ in range(10):
        X, y = random_instance(rng, n_max=30, m_max=5)
        data = from_arrays(X, y)
        a = solve(data, lam=0.05, leaf_count_pruning=True)
        b = solve(data, lam=0.05, leaf_count_pruning=False)
        assert _close(a.upper_bound, b.upper_bound)


def test_warm_start_changes_only_work():
    rng = np.random.default_rng(7)
    for _ in range(10):
        X, y = random_instance(rng, n_max=30, m_max=5, noise="signal")
        data = from_arrays(X, y)
        a = solve(data, lam=0.02, depth_limit=3)
        b = solve(data, lam=0.02, depth_limit=3, warm_start=True)
        assert _close(a.upper_bound, b.upper_bound)
        assert a.tree.structure() == b.tree.structure()


def test_leaf_budget_formula():
    assert leaf_budget(0.05, 0.05, 4) == 1
    assert prune_by_leaf_count(0.05, 0.05, 4)
    assert leaf_budget(1.0, 0.1, 3) == 8
    assert leaf_budget(1.0, 0.1, 5) == 10
    assert not prune_by_leaf_count(1.0, 0.1, 3)
    assert not prune_by_leaf_count(1.0, 0.0, 3)


def test_cheap_leaf_is_not_expanded():
    # leaf SSE / N = 0.25 / 4 < lambda
    X = np.array([[0], [0], [1], [1]])
    y = np.array([0.0, 0.0, 0.5, 0.5])
    search = Search(from_arrays(X, y), SolverConfig(lam=0.1))
    assert search.root.leaf_only
    assert search.root.state == "converged"
    search.work_loop()
    assert search.expansions == 0


def test_identical_partitions_create_one_child_pair():
    X = np.array([[0, 1, 1, 0], [1, 0, 0, 1], [0, 1, 1, 1], [1, 1, 1, 0], [0, 0, 0, 1]])
    y = np.array([1.0, 9.0, 2.0, 7.0, 4.0])
    search = Search(from_arrays(X, y), SolverConfig(lam=0.001))
    splits = search.expand(search.root)
    feats = [j for j, _, _ in splits]
    # columns 1 and 2 cut the support the same way
    assert 1 in feats and 2 not in feats
    assert len(splits) == 3


def test_pure_support_is_a_leaf():
    X = np.ones((5, 3), dtype=int)
    res = solve(from_arrays(X, np.arange(5.0)), lam=0.001)
    assert res.tree.leaf_count == 1
    assert res.expansions <= 1


def test_single_feature_converges_quickly():
    X = np.array([[0], [1], [0], [1]])
    y = np.array([0.0, 4.0, 1.0, 5.0])
    res = solve(from_arrays(X, y), lam=0.01)
    assert res.expansions <= 3
    assert res.tree.leaf_count == 2


def test_trace_is_monotone_and_sound():
    rng = np.random.default_rng(8)
    for _ in range(10):
        X, y = random_instance(rng, n_max=20, m_max=5, noise="signal")
        lam = 0.01
        opt = best_tree_objective(X, y, lam, 3)
        res = solve(from_arrays(X, y), SolverConfig(lam=lam, depth_limit=3, trace_every=0.0))
        lbs = [r.root_lb for r in res.trace]
        ubs = [r.root_ub for r in res.trace]
        assert all(a <= b for a, b in zip(lbs, lbs[1:]))
        assert all(a >= b for a, b in zip(ubs, ubs[1:]))
        tol = 1e-9 * max(1.0, opt)
        assert all(lb <= opt + tol for lb in lbs)
        assert all(ub >= opt - tol for ub in ubs)
        assert ubs[-1] - lbs[-1] <= tol


def test_depth_limit_relaxation_is_monotone():
    rng = np.random.default_rng(9)
    X = rng.integers(0, 2, (80, 6))
    y = X[:, 0] * 2 + (X[:, 1] & X[:, 2]) + rng.normal(0, 0.3, 80)
    data = from_arrays(X, y)
    objs = [solve(data, lam=0.002, depth_limit=d).upper_bound for d in (1, 2, 3, 4)]
    objs.append(solve(data, lam=0.002).upper_bound)
    assert all(a >= b - 1e-12 for a, b in zip(objs, objs[1:]))


def test_lambda_monotonicity():
    rng = np.random.default_rng(10)
    X = rng.integers(0, 2, (80, 6))
    y = X[:, 0] * 2 + (X[:, 1] & X[:, 2]) + rng.normal(0, 0.3, 80)
    data = from_arrays(X, y)
    leaves, losses = [], []
    for lam in [0.5, 0.1, 0.05, 0.01, 0.005, 0.001]:
        res = solve(data, lam=lam, depth_limit=4)
        leaves.append(res.tree.leaf_count)
        losses.append(evaluate(res.tree, data).mse)
    assert leaves == sorted(leaves)
    assert all(a >= b - 1e-12 for a, b in zip(losses, losses[1:]))


def test_permutations_keep_objective_and_partition():
    rng = np.random.default_rng(11)
    for _ in range(5):
        X = rng.integers(0, 2, (60, 6))
        y = 3 * X[:, 1] - 2 * (X[:, 2] & X[:, 4]) + rng.normal(0, 0.5, 60)
        base = solve(from_arrays(X, y), lam=0.01, depth_limit=4)
        parts = tree_partition(base.tree, X)
        rows = rng.permutation(60)
        cols = rng.permutation(6)
        shuffled = solve(from_arrays(X[rows][:, cols], y[rows]), lam=0.01, depth_limit=4)
        assert _close(shuffled.upper_bound, base.upper_bound)
        back = {frozenset(int(rows[i]) for i in g) for g in tree_partition(shuffled.tree, X[rows][:, cols])}
        assert back == parts


def test_timeout_returns_incumbent():
    rng = np.random.default_rng(12)
    X = rng.integers(0, 2, (400, 14))
    y = rng.normal(size=400)
    data = from_arrays(X, y)
    res = solve(data, lam=0.0005, time_limit=0.2)
    assert res.status == "timeout"
    assert res.gap > 0
    ev = evaluate(res.tree, data)
    assert _close(ev.mse + 0.0005 * res.tree.leaf_count, res.upper_bound)


def test_result_unpacks_like_a_tuple():
    X = np.array([[0], [1]])
    tree, trace, status = solve(from_arrays(X, [0.0, 1.0]), lam=0.01)
    assert status == "optimal"
    assert trace[0].iterations == 0


def test_extraction_objective_recomputes():
    rng = np.random.default_rng(13)
    for _ in range(10):
        X, y = random_instance(rng, n_max=25, m_max=5, noise="signal")
        res = solve(from_arrays(X, y), lam=0.003)
        assert _close(_objective(res.tree, X, y, 0.003), res.upper_bound)
        assert res.tree.training_objective == res.upper_bound


def test_tie_prefers_fewer_leaves_then_lower_feature():
    # two identical columns of signal: both splits are optimal, take column 0
    X = np.array([[1, 1], [1, 1], [0, 0], [0, 0]])
    y = np.array([1.0, 1.0, 0.0, 0.0])
    res = solve(from_arrays(X, y), lam=0.01)
    assert res.tree.feature[0] == 0
    # a split that exactly pays for itself loses to the single leaf
    X = np.array([[1], [0]])
    y = np.array([1.0, 0.0])
    lam = 0.25  # leaf: 0.25 + 0.25; split: 0 + 0.5
    res = solve(from_arrays(X, y), lam=lam)
    assert res.tree.leaf_count == 1


def test_best_feature_and_states():
    X = np.array([[0, 1], [0, 0], [1, 1], [1, 0]])
    y = np.array([0.0, 0.0, 3.0, 3.0])
    search = Search(from_arrays(X, y), SolverConfig(lam=0.01))
    assert search.root.state == "unexplored"
    search.work_loop()
    assert search.root.state == "converged"
    assert search.root.best_feature == 0
    assert search.root.support.popcount == 4


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(lam=-1)
    with pytest.raises(ValueError):
        SolverConfig(depth_limit=0)
    with pytest.raises(ValueError):
        SolverConfig(bound_mode="subset")
    with pytest.raises(ValueError):
        SolverConfig(tie_break="random")
    with pytest.raises(TypeError):
        solve(from_arrays([[0]], [1.0]), SolverConfig(), lam=0.1)
