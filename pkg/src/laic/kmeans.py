"""Seeded k-means (D-squared seeding + Lloyd) used for pseudo-labeling and
for the final clustering pass.

Arithmetic is float64. Distances are computed per-centroid with elementwise
reductions (no matrix-product kernels), so results are bitwise reproducible
for a given seed regardless of BLAS threading. Ties in the assignment step go
to the lowest centroid index. Empty clusters are repaired by seizing the point
farthest from its current centroid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .featurestore import FeatureMatrix


@dataclass
class KMeansResult:
    assignments: np.ndarray   # (n,) int32, values in [0, clusters)
    centroids: np.ndarray     # (clusters, dim) float64
    inertia: float            # sum of squared distances to assigned centroids
    iterations_run: int


def _as_points(matrix) -> np.ndarray:
    data = matrix.data if isinstance(matrix, FeatureMatrix) else matrix
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"points must be 2-D, got shape {x.shape}")
    return x


def _dists_sq(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, c) squared Euclidean distances, one centroid column at a time."""
    n, c = x.shape[0], centroids.shape[0]
    out = np.empty((n, c), dtype=np.float64)
    for j in range(c):
        diff = x - centroids[j]
        out[:, j] = (diff * diff).sum(axis=1)
    return out


def _seed_centroids(x: np.ndarray, clusters: int, rng: np.random.Generator) -> np.ndarray:
    """D-squared seeding: first pick uniform, later picks proportional to the
    squared distance from the nearest already-chosen centroid."""
    n = x.shape[0]
    centroids = np.empty((clusters, x.shape[1]), dtype=np.float64)
    centroids[0] = x[int(rng.integers(n))]
    diff = x - centroids[0]
    d2 = (diff * diff).sum(axis=1)
    for j in range(1, clusters):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))  # all points coincide with a centroid
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centroids[j] = x[idx]
        diff = x - centroids[j]
        d2 = np.minimum(d2, (diff * diff).sum(axis=1))
    return centroids


def _assign(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid assignment plus each point's squared distance."""
    d2 = _dists_sq(x, centroids)
    assign = np.argmin(d2, axis=1)  # ties: lowest index
    return assign.astype(np.int32), d2[np.arange(x.shape[0]), assign]


def _repair_empty(x, centroids, assign, dist_sq) -> None:
    """Give every empty cluster the point currently farthest from its
    centroid, drawn from a cluster that can spare one (>= 2 members) so the
    donor never becomes empty in turn. Each move fills exactly one empty
    cluster, so the loop ends after at most c steps even when every point
    coincides. Never increases inertia; mutates all three arrays."""
    c = centroids.shape[0]
    counts = np.bincount(assign, minlength=c)
    while True:
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return
        donors = np.flatnonzero(counts[assign] >= 2)
        far = int(donors[np.argmax(dist_sq[donors])])
        j = int(empty[0])
        counts[assign[far]] -= 1
        centroids[j] = x[far]
        assign[far] = j
        dist_sq[far] = 0.0
        counts[j] = 1


def kmeans_fit(matrix, clusters: int, seed: int = 0, max_iters: int = 300,
               tol: float = 1e-6) -> KMeansResult:
    """Cluster rows of ``matrix`` into ``clusters`` groups.

    Stops when the largest centroid displacement falls below ``tol`` or after
    ``max_iters`` Lloyd iterations. The returned assignments are consistent
    with the returned centroids (a final assignment pass follows the last
    update), and no cluster is left empty.
    """
    x = _as_points(matrix)
    n = x.shape[0]
    if clusters < 1:
        raise ValueError("clusters must be >= 1")
    if clusters > n:
        raise ValueError(f"clusters ({clusters}) exceeds points ({n})")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(x, clusters, rng)

    prev_inertia = np.inf
    iterations = 0
    for _ in range(max_iters):
        assign, dist_sq = _assign(x, centroids)
        _repair_empty(x, centroids, assign, dist_sq)
        inertia = float(dist_sq.sum())
        assert inertia <= prev_inertia * (1 + 1e-12) + 1e-9, "inertia increased"
        prev_inertia = inertia

        new_centroids = np.empty_like(centroids)
        for j in range(clusters):
            new_centroids[j] = x[assign == j].mean(axis=0)
        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        iterations += 1
        if shift < tol:
            break

    assign, dist_sq = _assign(x, centroids)
    _repair_empty(x, centroids, assign, dist_sq)
    inertia = float(dist_sq.sum())
    assert inertia <= prev_inertia * (1 + 1e-12) + 1e-9, "inertia increased"
    return KMeansResult(assignments=assign, centroids=centroids,
                        inertia=inertia, iterations_run=iterations)


def kmeans_assign(matrix, centroids: np.ndarray) -> np.ndarray:
    """Map rows to their nearest centroid (lowest index wins ties)."""
    x = _as_points(matrix)
    c = np.asarray(centroids, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] != x.shape[1]:
        raise ValueError(
            f"centroid dim {c.shape} incompatible with points dim {x.shape[1]}"
        )
    assign, _ = _assign(x, c)
    return assign
