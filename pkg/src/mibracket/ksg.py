"""Kraskov-Stoegbauer-Grassberger mutual information (first estimator).

Neighbour statistics use the Chebyshev (max-norm) metric throughout. The
joint space is the column concatenation ``[x, y]``; Chebyshev distance on
the concatenation is the max of the two marginal distances.

Every neighbour query has a kd-tree path and an O(N^2) brute-force path that
return bit-identical results.
"""

from __future__ import annotations

import heapq
import zlib
from dataclasses import dataclass

import numpy as np

from .data import zscore_array
from .errors import DomainError, ShapeError, UsageError

_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def digamma(x):
    """psi(x) for x > 0, scalar or array.

    Shifts the argument up to at least 10 with psi(x) = psi(x + 1) - 1/x, then
    applies the Bernoulli asymptotic series through x**-14.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(arr > 0) or not np.all(np.isfinite(arr)):
        raise DomainError("digamma is only defined here for finite x > 0")
    z = arr.copy()
    shift = np.zeros_like(z)
    small = z < 10.0
    while np.any(small):
        shift[small] -= 1.0 / z[small]
        z[small] += 1.0
        small = z < 10.0
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_ASYMPTOTIC):
        series = (series + c) * inv2
    out = np.log(z) - 0.5 / z - series + shift
    return float(out) if out.ndim == 0 else out


@dataclass
class KsgConfig:
    k: int = 5
    noise: float = 1e-10
    seed: int = 0
    leaf_size: int = 16

    def validate(self, n=None):
        if int(self.k) != self.k or self.k < 1:
            raise UsageError(f"k must be a positive integer, got {self.k}")
        if n is not None and self.k >= n:
            raise UsageError(f"k={self.k} needs more than {self.k} samples, got N={n}")
        if self.noise < 0:
            raise UsageError("noise amplitude must be non-negative")
        if self.leaf_size < 1:
            raise UsageError("leaf_size must be >= 1")


def _as_points(points):
    pts = np.asarray(getattr(points, "values", points), dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ShapeError(f"points must be an (N, d) array, got shape {pts.shape}")
    return pts


class KdTree:
    """Static kd-tree; median split on the axis with the widest spread.

    Nodes are kept in flat lists. Each node covers ``order[start:end]`` and
    stores its bounding box, which drives pruning for both query kinds.
    """

    def __init__(self, points, leaf_size=16):
        self.points = _as_points(points)
        self.leaf_size = int(leaf_size)
        n = self.points.shape[0]
        self.order = np.arange(n)
        self.start, self.end = [], []
        self.left, self.right = [], []
        self.lo, self.hi = [], []
        self.split_dim, self.split_val = [], []
        if n:
            self._build(0, n)
        # leaf blocks stored contiguously in tree order for vectorised scans
        self.sorted_points = self.points[self.order]

    def _build(self, start, end):
        node = len(self.start)
        block = self.points[self.order[start:end]]
        lo, hi = block.min(axis=0), block.max(axis=0)
        self.start.append(start)
        self.end.append(end)
        self.lo.append(lo)
        self.hi.append(hi)
        self.left.append(-1)
        self.right.append(-1)
        self.split_dim.append(-1)
        self.split_val.append(0.0)
        if end - start <= self.leaf_size:
            return node
        dim = int(np.argmax(hi - lo))
        mid = (start + end) // 2
        idx = self.order[start:end]
        part = np.argpartition(self.points[idx, dim], mid - start)
        self.order[start:end] = idx[part]
        self.split_dim[node] = dim
        self.split_val[node] = float(self.points[self.order[mid], dim])
        self.left[node] = self._build(start, mid)
        self.right[node] = self._build(mid, end)
        return node

    def __len__(self):
        return self.points.shape[0]

    def traverse(self):
        """Yield the original indices of all points, leaf by leaf."""
        stack = [0] if len(self) else []
        while stack:
            node = stack.pop()
            if self.left[node] < 0:
                yield from self.order[self.start[node]:self.end[node]].tolist()
            else:
                stack.append(self.right[node])
                stack.append(self.left[node])

    def _box_dist(self, node, q):
        gap = np.maximum(self.lo[node] - q, q - self.hi[node])
        return max(float(gap.max()), 0.0)

    def _box_far(self, node, q):
        return float(np.maximum(np.abs(q - self.lo[node]), np.abs(q - self.hi[node])).max())

    def kth_distance(self, q, k):
        """Chebyshev distance from ``q`` to its k-th nearest tree point (q itself counts)."""
        q = np.asarray(q, dtype=np.float64)
        best = np.full(k, np.inf)  # sorted ascending
        heap = [(0.0, 0)]
        while heap:
            bound, node = heapq.heappop(heap)
            if bound >= best[-1]:
                break
            if self.left[node] < 0:
                s, e = self.start[node], self.end[node]
                d = np.max(np.abs(self.sorted_points[s:e] - q), axis=1)
                merged = np.concatenate([best, d])
                best = np.sort(np.partition(merged, k - 1)[:k]) if len(merged) > k else np.sort(merged)
                continue
            for child in (self.left[node], self.right[node]):
                cb = self._box_dist(child, q)
                if cb < best[-1]:
                    heapq.heappush(heap, (cb, child))
        return float(best[-1])

    def count_within(self, q, radius):
        """Number of tree points at Chebyshev distance strictly below ``radius``."""
        if not len(self):
            return 0
        q = np.asarray(q, dtype=np.float64)
        total = 0
        stack = [0]
        while stack:
            node = stack.pop()
            if self._box_dist(node, q) >= radius:
                continue
            if self._box_far(node, q) < radius:
                total += self.end[node] - self.start[node]
                continue
            if self.left[node] < 0:
                s, e = self.start[node], self.end[node]
                d = np.max(np.abs(self.sorted_points[s:e] - q), axis=1)
                total += int(np.count_nonzero(d < radius))
            else:
                stack.append(self.left[node])
                stack.append(self.right[node])
        return total


def _chebyshev_matrix(pts):
    n = pts.shape[0]
    dist = np.zeros((n, n))
    for j in range(pts.shape[1]):
        col = pts[:, j]
        np.maximum(dist, np.abs(col[:, None] - col[None, :]), out=dist)
    return dist


def kth_neighbor_distances(points, k, method="kdtree", leaf_size=16):
    """Per-point Chebyshev distance to the k-th nearest other point."""
    pts = _as_points(points)
    n = pts.shape[0]
    if k < 1 or k >= n:
        raise UsageError(f"need 1 <= k < N, got k={k}, N={n}")
    if method == "brute":
        dist = _chebyshev_matrix(pts)
        np.fill_diagonal(dist, np.inf)
        return np.partition(dist, k - 1, axis=1)[:, k - 1]
    if method != "kdtree":
        raise UsageError(f"unknown neighbour method {method!r}")
    tree = KdTree(pts, leaf_size)
    # the query point sits in the tree at distance 0, so ask for k + 1
    return np.array([tree.kth_distance(p, k + 1) for p in pts])


def marginal_counts(points, radii, method="kdtree", leaf_size=16):
    """For each i, count j != i with Chebyshev distance strictly below ``radii[i]``."""
    pts = _as_points(points)
    radii = np.asarray(radii, dtype=np.float64)
    if radii.shape != (pts.shape[0],):
        raise ShapeError("need one radius per point")
    if method == "brute":
        dist = _chebyshev_matrix(pts)
        np.fill_diagonal(dist, np.inf)
        return np.count_nonzero(dist < radii[:, None], axis=1)
    if method != "kdtree":
        raise UsageError(f"unknown neighbour method {method!r}")
    tree = KdTree(pts, leaf_size)
    counts = np.array([tree.count_within(p, r) for p, r in zip(pts, radii)], dtype=np.int64)
    # the point itself is inside any positive radius
    return counts - (radii > 0)


def _jitter(a, amplitude, seed):
    if amplitude == 0:
        return a
    # keyed on content so that swapping the roles of x and y keeps each
    # side's noise, which makes the estimate exactly symmetric
    key = zlib.crc32(np.ascontiguousarray(a).tobytes())
    rng = np.random.default_rng([int(seed), key])
    return a + amplitude * rng.random(a.shape)


@dataclass
class KsgResult:
    estimate: float
    k: int
    n: int
    radii: np.ndarray
    n_x: np.ndarray
    n_y: np.ndarray


def ksg_statistics(x, y, cfg=None, method="kdtree"):
    """Full KSG computation, keeping the per-point radii and marginal counts."""
    cfg = cfg or KsgConfig()
    xa, ya = _as_points(x), _as_points(y)
    if xa.shape[0] != ya.shape[0]:
        raise ShapeError(f"x and y must have the same number of rows, got {xa.shape[0]} and {ya.shape[0]}")
    n = xa.shape[0]
    cfg.validate(n)
    if not (np.isfinite(xa).all() and np.isfinite(ya).all()):
        raise DomainError("KSG inputs must be finite")
    xa = _jitter(zscore_array(xa)[0], cfg.noise, cfg.seed)
    ya = _jitter(zscore_array(ya)[0], cfg.noise, cfg.seed)

    radii = kth_neighbor_distances(np.hstack([xa, ya]), cfg.k, method, cfg.leaf_size)
    n_x = marginal_counts(xa, radii, method, cfg.leaf_size)
    n_y = marginal_counts(ya, radii, method, cfg.leaf_size)
    estimate = digamma(cfg.k) + digamma(n) - float(np.mean(digamma(n_x + 1.0) + digamma(n_y + 1.0)))
    return KsgResult(float(estimate), cfg.k, n, radii, n_x, n_y)


def ksg_estimate(x, y, cfg=None, method="kdtree"):
    """KSG mutual information in nats; unclamped, so it can dip below zero."""
    return ksg_statistics(x, y, cfg, method).estimate

