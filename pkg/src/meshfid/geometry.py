"""Point-set machinery: spatial index, k-NN, farthest point sampling, and
ball query / multi-scale grouping.

The index wraps scipy's cKDTree for candidate search, but final distances
are always recomputed with plain numpy and ties broken by lower point
index, so query results are element-wise identical to a brute-force scan.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "SpatialIndex",
    "GroupingSpec",
    "build_index",
    "nearest",
    "ball_query",
    "farthest_point_sample",
]


@dataclass(frozen=True)
class SpatialIndex:
    points: np.ndarray  # (n, 3)
    tree: cKDTree = field(repr=False)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class GroupingSpec:
    """Multi-scale grouping parameters: one radius/cap pair per scale."""

    radii: tuple
    max_samples: tuple
    centroids: int

    def __post_init__(self):
        if len(self.radii) != len(self.max_samples):
            raise ValueError("radii and max_samples must have equal length")
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")
        if self.centroids < 1:
            raise ValueError("centroids must be >= 1")


def build_index(points: np.ndarray) -> SpatialIndex:
    points = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 1:
        raise ValueError(f"points must be (n>=1, 3), got {points.shape}")
    return SpatialIndex(points=points, tree=cKDTree(points))


def _exact_dists(points: np.ndarray, query: np.ndarray, idx) -> np.ndarray:
    diff = points[idx] - query
    return np.sqrt((diff * diff).sum(axis=-1))


def nearest(index: SpatialIndex, query, k: int) -> list[tuple[int, float]]:
    """k nearest points in nondecreasing distance, ties broken by lower index."""
    n = index.n
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    query = np.asarray(query, dtype=np.float64).reshape(3)
    d, _ = index.tree.query(query, k=k)
    dk = float(np.max(d))
    # collect everything within the kth distance so exact ties are resolved
    cand = index.tree.query_ball_point(query, dk * (1 + 1e-12) + 1e-300)
    cand = np.asarray(sorted(cand), dtype=np.int64)
    if cand.size < k:  # guard against rounding at the ball boundary
        cand = np.arange(n, dtype=np.int64)
    dist = _exact_dists(index.points, query, cand)
    order = np.lexsort((cand, dist))[:k]
    return [(int(cand[i]), float(dist[i])) for i in order]


def ball_query(index: SpatialIndex, center, radius: float, max_k: int) -> list[int]:
    """Indices within `radius` of `center`, nearest-first, truncated at
    `max_k`.  An empty ball falls back to the single global nearest point."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if max_k < 1:
        raise ValueError("max_k must be >= 1")
    center = np.asarray(center, dtype=np.float64).reshape(3)
    cand = index.tree.query_ball_point(center, radius * (1 + 1e-12))
    cand = np.asarray(sorted(cand), dtype=np.int64)
    if cand.size:
        dist = _exact_dists(index.points, center, cand)
        keep = dist <= radius
        cand, dist = cand[keep], dist[keep]
    if cand.size == 0:
        return [nearest(index, center, 1)[0][0]]
    order = np.lexsort((cand, dist))[:max_k]
    return [int(i) for i in cand[order]]


def farthest_point_sample(points: np.ndarray, m: int, seed: int = 0) -> np.ndarray:
    """Greedy max-min subset selection.  The start index is a seeded draw
    (PCG64); every subsequent pick maximizes the distance to the chosen set,
    ties broken by lower index."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    rng = np.random.Generator(np.random.PCG64(seed))
    start = int(rng.integers(n))
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = start
    min_sq = ((points - points[start]) ** 2).sum(axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(min_sq))  # argmax takes the first (lowest) index on ties
        chosen[i] = nxt
        sq = ((points - points[nxt]) ** 2).sum(axis=1)
        np.minimum(min_sq, sq, out=min_sq)
    return chosen
