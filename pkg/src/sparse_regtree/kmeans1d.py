"""Exact weighted k-Means on the real line.

Optimal clusters of sorted 1D points are contiguous, so the problem reduces to
a dynamic program over prefixes: ``D[c, i]`` is the smallest weighted SSE of
points ``0..i`` split into ``c + 1`` contiguous groups.  The table is grown one
cluster-row at a time so callers can stop as soon as another cluster stops
paying for itself.

Two row kernels are provided.  ``"quadratic"`` scans every split point and is
kept as the reference; ``"dc"`` exploits the monotonicity of the optimal split
index (the interval cost is Monge) and solves each row by divide and conquer.
Both produce identical tables up to floating point ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

__all__ = [
    "WeightedPoints",
    "KMeansTable",
    "build",
    "fill_next_row",
    "optimal_loss",
    "regularized_min",
    "loss_curve",
]


@dataclass(frozen=True)
class WeightedPoints:
    """Sorted, strictly increasing values with positive weights."""

    values: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def build(values, weights=None) -> WeightedPoints:
    """Sort points and merge duplicate values by summing their weights.

    Raises
    ------
    ValueError
        If the input is empty, lengths differ or a weight is not positive.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot build weighted points from an empty input")
    if v.shape != w.shape:
        raise ValueError(f"values and weights differ in length ({v.size} != {w.size})")
    if not np.all(np.isfinite(v)) or not np.all(np.isfinite(w)):
        raise ValueError("values and weights must be finite")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    uniq, inverse = np.unique(v, return_inverse=True)
    merged = np.bincount(inverse, weights=w, minlength=uniq.size)
    return WeightedPoints(values=uniq, weights=merged)


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _prefix_sums(v, w):
    n = v.shape[0]
    # centre on the weighted mean to limit cancellation in the interval cost
    tot = 0.0
    mu = 0.0
    for i in range(n):
        tot += w[i]
        mu += w[i] * v[i]
    mu /= tot
    p0 = np.zeros(n + 1)
    p1 = np.zeros(n + 1)
    p2 = np.zeros(n + 1)
    for i in range(n):
        d = v[i] - mu
        p0[i + 1] = p0[i] + w[i]
        p1[i + 1] = p1[i] + w[i] * d
        p2[i + 1] = p2[i] + w[i] * d * d
    return p0, p1, p2


@numba.njit(cache=True, inline="always")
def _cost(p0, p1, p2, s, i):
    # weighted SSE of points s..i inclusive
    ww = p0[i + 1] - p0[s]
    s1 = p1[i + 1] - p1[s]
    s2 = p2[i + 1] - p2[s]
    c = s2 - s1 * s1 / ww
    if c < 0.0:
        return 0.0
    return c


@numba.njit(cache=True)
def _first_row(p0, p1, p2, row, arg):
    n = row.shape[0]
    for i in range(n):
        row[i] = _cost(p0, p1, p2, 0, i)
        arg[i] = 0


@numba.njit(cache=True)
def _row_quadratic(prev, p0, p1, p2, c, row, arg):
    n = prev.shape[0]
    for i in range(min(c, n)):
        row[i] = 0.0
        arg[i] = i
    for i in range(c, n):
        best = np.inf
        besti = c
        for s in range(c, i + 1):
            val = prev[s - 1] + _cost(p0, p1, p2, s, i)
            if val < best:
                best = val
                besti = s
        row[i] = best
        arg[i] = besti


@numba.njit(cache=True)
def _row_dc(prev, p0, p1, p2, c, row, arg):
    n = prev.shape[0]
    for i in range(min(c, n)):
        row[i] = 0.0
        arg[i] = i
    if c >= n:
        return
    # explicit stack of (lo, hi, opt_lo, opt_hi) ranges
    stack = np.empty((64 + 2 * n, 4), dtype=np.int64)
    top = 0
    stack[0, 0] = c
    stack[0, 1] = n - 1
    stack[0, 2] = c
    stack[0, 3] = n - 1
    top = 1
    while top > 0:
        top -= 1
        lo = stack[top, 0]
        hi = stack[top, 1]
        olo = stack[top, 2]
        ohi = stack[top, 3]
        if lo > hi:
            continue
        mid = (lo + hi) // 2
        best = np.inf
        besti = olo
        end = min(mid, ohi)
        for s in range(olo, end + 1):
            val = prev[s - 1] + _cost(p0, p1, p2, s, mid)
            if val < best:
                best = val
                besti = s
        row[mid] = best
        arg[mid] = besti
        stack[top, 0] = lo
        stack[top, 1] = mid - 1
        stack[top, 2] = olo
        stack[top, 3] = besti
        top += 1
        stack[top, 0] = mid + 1
        stack[top, 1] = hi
        stack[top, 2] = besti
        stack[top, 3] = ohi
        top += 1


@numba.njit(cache=True)
def _regularized_min_kernel(v, w, lam, cmax):
    """Return (min_C loss(C) + lam*C, C*, loss(C*)) with early termination.

    ``v`` must be sorted ascending.  Rows are filled until the improvement
    from one more cluster is at most ``lam`` (valid because the loss is
    convex in C) or ``cmax`` is reached.
    """
    n = v.shape[0]
    if cmax > n:
        cmax = n
    p0, p1, p2 = _prefix_sums(v, w)
    prev = np.empty(n)
    arg = np.empty(n, dtype=np.int64)
    _first_row(p0, p1, p2, prev, arg)
    best_loss = prev[n - 1]
    best_c = 1
    if cmax <= 1:
        return best_loss + lam, 1, best_loss
    row = np.empty(n)
    for c in range(1, cmax):
        _row_dc(prev, p0, p1, p2, c, row, arg)
        loss = row[n - 1]
        if best_loss - loss <= lam:
            break
        best_loss = loss
        best_c = c + 1
        tmp = prev
        prev = row
        row = tmp
    return best_loss + lam * best_c, best_c, best_loss


@numba.njit(cache=True)
def _sorted_regularized_min(v, w, lam, cmax):
    # unsorted, possibly duplicated values
    order = np.argsort(v, kind="mergesort")
    n = v.shape[0]
    vs = np.empty(n)
    ws = np.empty(n)
    k = -1
    for t in range(n):
        i = order[t]
        if k >= 0 and v[i] == vs[k]:
            ws[k] += w[i]
        else:
            k += 1
            vs[k] = v[i]
            ws[k] = w[i]
    return _regularized_min_kernel(vs[: k + 1], ws[: k + 1], lam, cmax)


# --------------------------------------------------------------------------
# table API
# --------------------------------------------------------------------------


@dataclass
class KMeansTable:
    """Row-by-row DP table for one set of weighted points.

    ``rows[c][i]`` holds the optimal loss of the first ``i + 1`` points using
    ``c + 1`` clusters and ``splits[c][i]`` the index where the last cluster
    starts.
    """

    points: WeightedPoints
    method: str = "dc"
    rows: list = field(default_factory=list)
    splits: list = field(default_factory=list)

    def __post_init__(self):
        if self.method not in ("dc", "quadratic"):
            raise ValueError(f"unknown row method {self.method!r}")
        self.prefix_sums = _prefix_sums(self.points.values, self.points.weights)

    @property
    def n_clusters(self) -> int:
        return len(self.rows)

    def loss(self, n_clusters: int) -> float:
        return float(self.rows[n_clusters - 1][-1])

    def fill_next_row(self) -> "KMeansTable":
        n = len(self.points)
        c = len(self.rows)
        if c >= n:
            raise ValueError(f"cannot use more than {n} clusters for {n} points")
        p0, p1, p2 = self.prefix_sums
        row = np.empty(n)
        arg = np.empty(n, dtype=np.int64)
        if c == 0:
            _first_row(p0, p1, p2, row, arg)
        elif self.method == "dc":
            _row_dc(self.rows[-1], p0, p1, p2, c, row, arg)
        else:
            _row_quadratic(self.rows[-1], p0, p1, p2, c, row, arg)
        self.rows.append(row)
        self.splits.append(arg)
        return self

    def clusters(self, n_clusters: int | None = None) -> list[tuple[int, int]]:
        """Backtrack the optimal contiguous clusters as (start, stop) slices."""
        c = self.n_clusters if n_clusters is None else n_clusters
        if not 1 <= c <= self.n_clusters:
            raise ValueError(f"table holds {self.n_clusters} rows, asked for {c}")
        out = []
        end = len(self.points) - 1
        for r in range(c - 1, -1, -1):
            if end < 0:
                break
            start = int(self.splits[r][end])
            out.append((start, end + 1))
            end = start - 1
        return out[::-1]


def fill_next_row(table: KMeansTable) -> KMeansTable:
    return table.fill_next_row()


def _check_points(points) -> WeightedPoints:
    if isinstance(points, WeightedPoints):
        return points
    return build(points)


def optimal_loss(points, n_clusters: int, method: str = "dc") -> float:
    """Optimal weighted SSE of ``points`` with exactly ``n_clusters`` groups."""
    points = _check_points(points)
    if not 1 <= n_clusters <= len(points):
        raise ValueError(f"n_clusters must lie in [1, {len(points)}], got {n_clusters}")
    table = KMeansTable(points, method=method)
    for _ in range(n_clusters):
        table.fill_next_row()
    return table.loss(n_clusters)


def loss_curve(points, max_clusters: int | None = None, method: str = "dc") -> np.ndarray:
    """Optimal loss for every C in ``1..max_clusters`` (default: all points)."""
    points = _check_points(points)
    cmax = len(points) if max_clusters is None else min(max_clusters, len(points))
    table = KMeansTable(points, method=method)
    for _ in range(cmax):
        table.fill_next_row()
    return np.array([table.loss(c) for c in range(1, cmax + 1)])


def regularized_min(points, lambda_scaled: float, max_clusters: int | None = None):
    """Minimise ``optimal_loss(C) + lambda_scaled * C`` over C >= 1.

    Returns ``(value, C)`` where ``value`` includes the penalty term.  The loop
    stops at the first C whose marginal improvement is at most
    ``lambda_scaled``; convexity of the loss in C makes that exact.
    """
    points = _check_points(points)
    if lambda_scaled < 0:
        raise ValueError("lambda_scaled must be non-negative")
    cmax = len(points) if max_clusters is None else max(1, min(max_clusters, len(points)))
    value, c, _ = _regularized_min_kernel(points.values, points.weights, float(lambda_scaled), cmax)
    return float(value), int(c)
