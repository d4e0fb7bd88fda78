"""Dynamic programming with bounds over support sets.

Every subproblem is the set of training samples reaching some node, stored as
the sorted ids of the equivalent sets it contains (no tree can split an
equivalent set, so every reachable support is a union of them).  Subproblems
are memoised in a dependency graph keyed by that support (and by the remaining
depth when a depth limit is set).  Each one carries

* ``ub``: the best objective of any subtree found so far (a leaf, initially);
* ``lb``: a proven lower bound (k-Means or equivalent-points bound, later the
  best split's children bounds).

The search repeatedly walks the lower-bound-optimal partial tree from the
root, expands its open tips, and pushes bound changes up to every parent.  The
root is optimal once ``ub - lb <= eps``.  All objectives are raw sums of
squares internally (loss * N); public values are divided by N.
"""

from __future__ import annotations

import logging
import math
import resource
import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import max_clusters
from .dataset import BinaryDataset
from .kmeans1d import _sorted_regularized_min
from .model import Tree

__all__ = [
    "SolverConfig",
    "SupportSet",
    "TraceRecord",
    "Subproblem",
    "SolveResult",
    "Search",
    "solve",
    "leaf_budget",
    "prune_by_leaf_count",
    "converge_tol",
]

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
TIMEOUT = "timeout"
MEMORY = "memory_limit"


def converge_tol(ub: float) -> float:
    """Convergence tolerance for a normalised objective."""
    return 1e-9 * max(1.0, ub)


def leaf_budget(incumbent: float, lam: float, n_features: int) -> int:
    """Most leaves an optimal tree can have: min(floor(R/lambda), 2^M)."""
    if lam <= 0:
        return 2**n_features
    return int(min(math.floor(incumbent / lam + 1e-9), 2**min(n_features, 62)))


def prune_by_leaf_count(incumbent: float, lam: float, n_features: int) -> bool:
    """True when no split can pay for itself below ``incumbent``."""
    return lam > 0 and leaf_budget(incumbent, lam, n_features) < 2


@dataclass
class SolverConfig:
    lam: float = 0.01
    depth_limit: int | None = None
    time_limit: float | None = None
    bound_mode: str = "kmeans"
    tie_break: str = "fewest_leaves_then_index"
    warm_start: bool = False
    leaf_count_pruning: bool = True
    trace_every: float = 0.05
    memory_limit: int = 8 * 2**30

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.depth_limit is not None and self.depth_limit < 1:
            raise ValueError("depth_limit must be at least 1")
        if self.bound_mode not in ("kmeans", "equiv"):
            raise ValueError(f"unknown bound mode {self.bound_mode!r}")
        if self.tie_break != "fewest_leaves_then_index":
            raise ValueError(f"unknown tie-break rule {self.tie_break!r}")


@dataclass(frozen=True)
class TraceRecord:
    wall_time: float
    root_lb: float
    root_ub: float
    graph_size: int
    iterations: int


@dataclass(frozen=True)
class SupportSet:
    """Samples reaching a node, stored as sorted equivalent-set ids.

    ``key`` is the byte image of ``ids``; dict lookups compare it bytewise after
    the hash matches.  ``popcount`` is the number of samples covered.
    """

    ids: np.ndarray = field(repr=False, compare=False)
    key: bytes
    popcount: int


class Subproblem:
    """One memoised node of the dependency graph."""

    __slots__ = ("ids", "budget", "n", "leaf", "lb", "ub", "splits", "parents", "leaf_only")

    def __init__(self, ids, budget, n, leaf, lb):
        self.ids = ids
        self.budget = budget
        self.n = n
        self.leaf = leaf
        self.lb = lb
        self.ub = leaf
        self.splits = None  # list of [feature, left, right] once expanded
        self.parents = []
        self.leaf_only = False

    @property
    def support(self) -> SupportSet:
        return SupportSet(self.ids, self.ids.tobytes(), self.n)

    @property
    def best_feature(self) -> int | None:
        """Feature of the split realising ``ub``; None when the leaf does."""
        if self.splits is None or self.leaf <= self.ub:
            return None
        for j, left, right in sorted(self.splits, key=lambda sp: sp[0]):
            if left.ub + right.ub <= self.ub:
                return j
        return None

    @property
    def state(self) -> str:
        if self.ub - self.lb <= _eps_raw(self.ub, 1):
            return "converged"
        return "unexplored" if self.splits is None else "expanded"

    def __repr__(self):
        return f"Subproblem(n={self.n}, budget={self.budget}, lb={self.lb:.6g}, ub={self.ub:.6g})"


def _eps_raw(ub_raw: float, n_total: int) -> float:
    return 1e-9 * max(float(n_total), ub_raw)


@dataclass
class SolveResult:
    tree: Tree
    trace: list
    status: str
    lower_bound: float
    upper_bound: float
    iterations: int
    expansions: int
    graph_size: int
    wall_time: float

    @property
    def gap(self) -> float:
        return max(0.0, self.upper_bound - self.lower_bound)

    @property
    def objective(self) -> float:
        return self.upper_bound

    def __iter__(self):
        return iter((self.tree, self.trace, self.status))


class Search:
    """Dependency graph plus the work loop that tightens it."""

    def __init__(self, data: BinaryDataset, cfg: SolverConfig):
        self.data = data
        self.cfg = cfg
        self.N = data.n_samples
        self.lam_raw = cfg.lam * self.N
        self.X = np.ascontiguousarray(data.class_rows)
        self.w = data.class_size
        self.m = data.class_mean
        self.e = data.class_sse
        self.use_kmeans = cfg.bound_mode == "kmeans"
        self.graph: dict = {}
        self.iterations = 0
        self.expansions = 0
        self.trace: list[TraceRecord] = []
        ids = np.arange(data.n_classes, dtype=np.int32)
        self.root = self.subproblem(ids, cfg.depth_limit)

    # -- graph construction -------------------------------------------------
    def eps(self, ub_raw: float) -> float:
        return _eps_raw(ub_raw, self.N)

    def subproblem(self, ids, budget, key=None) -> Subproblem:
        """Look up or create the node for support ``ids`` with depth ``budget``."""
        if key is None:
            key = ids.tobytes()
        gkey = (key, budget)
        node = self.graph.get(gkey)
        if node is not None:
            return node
        w = self.w[ids]
        m = self.m[ids]
        e = self.e[ids]
        W = w.sum()
        mu = (w @ m) / W
        d = m - mu
        within = e.sum()
        within = float(within)
        leaf_sse = within + float(w @ (d * d))
        leaf = leaf_sse + self.lam_raw
        node = Subproblem(ids, budget, int(W), leaf, leaf)
        if (
            ids.size == 1
            or budget == 0
            or leaf_sse <= self.lam_raw
            or (self.cfg.leaf_count_pruning and prune_by_leaf_count(leaf, self.lam_raw, self.X.shape[1]))
        ):
            node.leaf_only = True
        else:
            if self.use_kmeans:
                cmax = 1 << 62 if budget is None else max_clusters(budget)
                val, _, _ = _sorted_regularized_min(m, w, self.lam_raw, cmax)
                lb = float(val) + within
            else:
                lb = within + self.lam_raw
            # shave rounding noise so lb can never exceed a later exact ub
            node.lb = max(0.0, min(lb, leaf) - 1e-12 * leaf_sse)
        self.graph[gkey] = node
        return node

    def expand(self, node: Subproblem) -> list:
        """Create the children of every non-trivial split of ``node``."""
        self.expansions += 1
        if node.leaf_only:
            node.splits = []
            node.lb = node.ub
            return []
        ids = node.ids
        F = self.X[ids]
        cnt = F.sum(axis=0)
        n = ids.size
        budget = None if node.budget is None else node.budget - 1
        seen = set()
        splits = []
        ub = node.ub
        for j in np.flatnonzero((cnt > 0) & (cnt < n)):
            mask = F[:, j]
            left_ids = ids[mask]
            right_ids = ids[~mask]
            kl = left_ids.tobytes()
            kr = right_ids.tobytes()
            pair = (kl, kr) if kl < kr else (kr, kl)
            if pair in seen:
                continue
            seen.add(pair)
            left = self.subproblem(left_ids, budget, kl)
            right = self.subproblem(right_ids, budget, kr)
            if left.lb + right.lb > ub + self.eps(ub):
                continue
            ubs = left.ub + right.ub
            if ubs < ub:
                ub = ubs
            splits.append([int(j), left, right])
            left.parents.append(node)
            right.parents.append(node)
        node.splits = splits
        self._recompute(node)
        return splits

    def _recompute(self, node: Subproblem) -> bool:
        ub = node.ub
        for _, left, right in node.splits:
            s = left.ub + right.ub
            if s < ub:
                ub = s
        lbmin = math.inf
        live = []
        cut = ub + self.eps(ub)
        for sp in node.splits:
            s = sp[1].lb + sp[2].lb
            if s <= cut:
                live.append(sp)
                if s < lbmin:
                    lbmin = s
        lb = max(node.lb, min(ub, lbmin))
        if lb > ub:
            lb = ub
        node.splits = live
        changed = lb != node.lb or ub != node.ub
        node.lb = lb
        node.ub = ub
        return changed

    def propagate(self, nodes) -> None:
        stack = []
        for n in nodes:
            stack.extend(n.parents)
        while stack:
            p = stack.pop()
            if p.splits is None:
                continue
            if self._recompute(p):
                stack.extend(p.parents)

    # -- search -------------------------------------------------------------
    def converged(self, node: Subproblem) -> bool:
        return node.ub - node.lb <= self.eps(node.ub)

    def open_tips(self, start: Subproblem | None = None) -> list:
        """Unexpanded nodes on the lower-bound-optimal partial tree."""
        tips = []
        seen = set()
        stack = [self.root if start is None else start]
        while stack:
            node = stack.pop()
            if id(node) in seen or self.converged(node):
                continue
            seen.add(id(node))
            if node.splits is None:
                tips.append(node)
                continue
            best = None
            best_val = node.ub - self.eps(node.ub)
            for sp in node.splits:
                s = sp[1].lb + sp[2].lb
                if s < best_val:
                    best_val = s
                    best = sp
            if best is None:
                node.lb = node.ub
                self.propagate([node])
                continue
            # visit the true side first
            stack.append(best[2])
            stack.append(best[1])
        return tips

    def settle(self, node: Subproblem) -> None:
        """Run the search below ``node`` until its bounds meet."""
        while not self.converged(node):
            tips = self.open_tips(node)
            for t in tips:
                self.expand(t)
            self.propagate(tips)

    def _warm_start(self) -> None:
        node = self.root
        while not node.leaf_only and node.splits is None:
            self.expand(node)
            self.propagate([node])
            if not node.splits:
                break
            sp = min(node.splits, key=lambda s: (s[1].leaf + s[2].leaf, s[0]))
            if sp[1].leaf + sp[2].leaf >= node.leaf:
                break
            for child in (sp[1], sp[2]):
                if child.splits is None and not child.leaf_only:
                    self.expand(child)
                    self.propagate([child])
            node = sp[1] if sp[1].leaf - sp[1].lb >= sp[2].leaf - sp[2].lb else sp[2]

    def _record(self, t0: float, force: bool = False) -> None:
        rec = TraceRecord(
            wall_time=time.perf_counter() - t0,
            root_lb=self.root.lb / self.N,
            root_ub=self.root.ub / self.N,
            graph_size=len(self.graph),
            iterations=self.iterations,
        )
        if force or not self.trace or (
            rec.wall_time - self.trace[-1].wall_time >= self.cfg.trace_every
            and (rec.root_lb != self.trace[-1].root_lb or rec.root_ub != self.trace[-1].root_ub)
        ):
            self.trace.append(rec)

    def work_loop(self) -> str:
        cfg = self.cfg
        t0 = time.perf_counter()
        self._t0 = t0
        deadline = None if cfg.time_limit is None else t0 + cfg.time_limit
        self._record(t0, force=True)
        if cfg.warm_start:
            self._warm_start()
        status = OPTIMAL
        while not self.converged(self.root):
            if deadline is not None and time.perf_counter() > deadline:
                status = TIMEOUT
                break
            if self.iterations % 64 == 0 and _rss_bytes() > cfg.memory_limit:
                status = MEMORY
                break
            self.iterations += 1
            tips = self.open_tips()
            for node in tips:
                self.expand(node)
            self.propagate(tips)
            self._record(t0)
        self._record(t0, force=True)
        self.wall_time = time.perf_counter() - t0
        return status

    # -- extraction -----------------------------------------------------------
    def extract_tree(self, resolve_ties: bool | None = None) -> Tree:
        """Rebuild the tree realising the root's upper bound.

        Ties within tolerance go to the fewest leaves, then the smallest
        feature index.  The main loop never refines splits whose bound only
        ties the optimum, so with ``resolve_ties`` (default: when the root has
        converged) such splits are settled here before choosing.
        """
        if resolve_ties is None:
            resolve_ties = self.converged(self.root)
        memo = {}

        def choice(node):
            got = memo.get(id(node))
            if got is not None:
                return got
            tol = self.eps(node.ub)
            cut = node.ub + tol
            if node.leaf <= cut or not node.splits:
                res = (1, None)
            else:
                best = None
                for sp in sorted(node.splits, key=lambda s: s[0]):
                    if resolve_ties and sp[1].lb + sp[2].lb <= cut < sp[1].ub + sp[2].ub:
                        self.settle(sp[1])
                        self.settle(sp[2])
                    if sp[1].ub + sp[2].ub <= cut:
                        leaves = choice(sp[1])[0] + choice(sp[2])[0]
                        if best is None or leaves < best[0]:
                            best = (leaves, sp)
                if best is None:
                    raise AssertionError("upper bound not realised by any stored split")
                res = best
            memo[id(node)] = res
            return res

        tree = Tree(
            feature_names=list(self.data.feature_names),
            n_features=self.data.n_features,
            lam=self.cfg.lam,
        )

        def build(node):
            _, sp = choice(node)
            if sp is None:
                w = self.w[node.ids]
                return tree.add_leaf(float(w @ self.m[node.ids] / w.sum()), node.n)
            idx = tree.add_branch(sp[0], node.n)
            tree.true_child[idx] = build(sp[1])
            tree.false_child[idx] = build(sp[2])
            return idx

        build(self.root)
        _merge_sibling_leaves(tree, self.cfg.lam, self.N)
        tree.training_objective = self.root.ub / self.N
        return tree


def _merge_sibling_leaves(tree: Tree, lam: float, n_total: int) -> int:
    """Collapse any branch whose two leaves cost more than one merged leaf.

    An optimal extraction never leaves such a pair; the pass is a guard and
    returns how many merges it made.
    """
    merged = 0
    changed = True
    while changed:
        changed = False
        for n in range(tree.node_count):
            if tree.is_leaf(n):
                continue
            a, b = tree.true_child[n], tree.false_child[n]
            if a < 0 or not (tree.is_leaf(a) and tree.is_leaf(b)):
                continue
            ca, cb = tree.count[a], tree.count[b]
            va, vb = tree.value[a], tree.value[b]
            # SSE increase from pooling two groups with means va and vb
            gain = ca * cb / (ca + cb) * (va - vb) ** 2
            if gain < lam * n_total * (1 - 1e-12):
                tree.feature[n] = -1
                tree.value[n] = (ca * va + cb * vb) / (ca + cb)
                tree.true_child[n] = tree.false_child[n] = -1
                merged += 1
                changed = True
    if merged:
        _compact(tree)
        log.warning("merged %d sibling leaf pairs during extraction", merged)
    return merged


def _compact(tree: Tree) -> None:
    keep = []

    def rec(n):
        keep.append(n)
        if not tree.is_leaf(n):
            rec(tree.true_child[n])
            rec(tree.false_child[n])

    rec(0)
    remap = {old: new for new, old in enumerate(keep)}
    cols = [tree.feature, tree.true_child, tree.false_child, tree.value, tree.count]
    new = [[c[i] for i in keep] for c in cols]
    for k in (1, 2):
        new[k] = [remap.get(i, -1) if i >= 0 else -1 for i in new[k]]
    for c, v in zip(cols, new):
        c[:] = v


def _rss_bytes() -> int:
    # ru_maxrss is in KiB on Linux
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def solve(data: BinaryDataset, cfg: SolverConfig | None = None, **kwargs) -> SolveResult:
    """Find a tree minimising ``MSE + lam * leaves`` (optionally depth-limited)."""
    if cfg is None:
        cfg = SolverConfig(**kwargs)
    elif kwargs:
        raise TypeError("pass either a SolverConfig or keyword arguments, not both")
    search = Search(data, cfg)
    status = search.work_loop()
    tree = search.extract_tree()
    log.info(
        "solve: status=%s objective=%.6g lb=%.6g leaves=%d nodes=%d iterations=%d",
        status, search.root.ub / search.N, search.root.lb / search.N,
        tree.leaf_count, len(search.graph), search.iterations,
    )
    return SolveResult(
        tree=tree,
        trace=search.trace,
        status=status,
        lower_bound=search.root.lb / search.N,
        upper_bound=search.root.ub / search.N,
        iterations=search.iterations,
        expansions=search.expansions,
        graph_size=len(search.graph),
        wall_time=search.wall_time,
    )
