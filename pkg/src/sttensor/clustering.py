"""K-means over factor rows with silhouette scoring and a best-k sweep.

Lloyd's algorithm with k-means++ seeding, best-of-n_init restarts by
inertia. Silhouette uses Euclidean distances and Rousseeuw's conventions:
singleton-cluster samples score 0, as do coincident clusters where both
mean distances vanish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = ["ClusterResult", "KSweepResult", "kmeans", "silhouette", "sweep_k"]


@dataclass
class ClusterResult:
    n_clusters: int
    assignments: np.ndarray  # labels 0..k-1, every cluster nonempty
    centroids: np.ndarray
    inertia: float
    per_sample_silhouette: np.ndarray
    mean_silhouette: float
    inertia_history: np.ndarray  # winning restart, one value per Lloyd iteration
    n_restarts: int


@dataclass
class KSweepResult:
    ks: np.ndarray
    silhouettes: np.ndarray
    best_k: int
    best: ClusterResult


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))  # every point coincides with a center
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def _lloyd(points, k, rng, max_iters, tol):
    n = points.shape[0]
    centers = _kmeanspp(points, k, rng)
    labels = None
    history = []
    for _ in range(max_iters):
        d2 = cdist(points, centers, "sqeuclidean")
        new_labels = d2.argmin(axis=1)
        assigned = d2[np.arange(n), new_labels]
        # repair empty clusters with the point currently farthest from its
        # centroid, never robbing a singleton cluster or the same point twice
        sizes = np.bincount(new_labels, minlength=k)
        if (sizes == 0).any():
            claimable = assigned.copy()
            for c in np.flatnonzero(sizes == 0):
                eligible = sizes[new_labels] > 1
                far = int(np.where(eligible, claimable, -np.inf).argmax())
                sizes[new_labels[far]] -= 1
                sizes[c] += 1
                new_labels[far] = c
                centers[c] = points[far]
                assigned[far] = 0.0
                claimable[far] = -np.inf
        history.append(float(assigned.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        new_centers = np.stack([points[labels == c].mean(axis=0) for c in range(k)])
        shift = float(((new_centers - centers) ** 2).sum())
        centers = new_centers
        if shift <= tol:
            break
    return labels, centers, history[-1], history


def kmeans(
    points,
    k: int,
    seed: int = 0,
    n_init: int = 10,
    max_iters: int = 300,
    tol: float = 1e-9,
) -> ClusterResult:
    """Best-of-``n_init`` Lloyd runs; deterministic given the seed.

    Ties in inertia keep the earliest restart. Requires 2 <= k <= n.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-d array")
    if not np.isfinite(pts).all():
        raise ValueError("points must be finite")
    n = pts.shape[0]
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points ({n})")
    if n_init < 1 or max_iters < 1:
        raise ValueError("n_init and max_iters must be >= 1")

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, centers, inertia, history = _lloyd(pts, k, rng, max_iters, tol)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia, history)
    labels, centers, inertia, history = best
    per_sample, mean = silhouette(pts, labels)
    return ClusterResult(
        n_clusters=k,
        assignments=labels,
        centroids=centers,
        inertia=float(inertia),
        per_sample_silhouette=per_sample,
        mean_silhouette=float(mean),
        inertia_history=np.asarray(history),
        n_restarts=n_init,
    )


def silhouette(points, assignments) -> tuple[np.ndarray, float]:
    """Per-sample and mean silhouette, (b - a) / max(a, b).

    ``a`` is the mean distance to the sample's own cluster (excluding
    itself), ``b`` the smallest mean distance to another cluster.
    Distance sums are accumulated in row blocks so the full pairwise
    matrix is never materialized.
    """
    pts = np.asarray(points, dtype=np.float64)
    labels = np.asarray(assignments).ravel()
    n = pts.shape[0]
    if labels.size != n:
        raise ValueError("one label per point required")
    uniq, inv = np.unique(labels, return_inverse=True)
    k = uniq.size
    if k < 2:
        raise ValueError("silhouette requires at least 2 clusters")
    counts = np.bincount(inv, minlength=k)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), inv] = 1.0

    sums = np.empty((n, k))
    block = max(1, min(n, 4_000_000 // max(n, 1)))
    for start in range(0, n, block):
        stop = min(start + block, n)
        sums[start:stop] = cdist(pts[start:stop], pts) @ onehot

    rows = np.arange(n)
    own_count = counts[inv]
    a = np.zeros(n)
    multi = own_count > 1
    a[multi] = sums[rows, inv][multi] / (own_count[multi] - 1)
    mean_other = sums / counts[None, :]
    mean_other[rows, inv] = np.inf
    b = mean_other.min(axis=1)

    denom = np.maximum(a, b)
    score = np.zeros(n)
    valid = multi & (denom > 0)
    score[valid] = (b[valid] - a[valid]) / denom[valid]
    return score, float(score.mean())


def sweep_k(points, k_min: int = 2, k_max: int = 12, seed: int = 0, n_init: int = 10) -> KSweepResult:
    """Mean silhouette for each k in [k_min, k_max]; best k is the argmax,
    ties broken toward smaller k."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k_min < 2:
        raise ValueError("k_min must be >= 2")
    if k_max < k_min:
        raise ValueError("k_max must be >= k_min")
    if k_max > n - 1:
        raise ValueError(f"k_max={k_max} must be at most n-1 = {n - 1}")
    ks = np.arange(k_min, k_max + 1)
    results = [kmeans(pts, int(k), seed=seed, n_init=n_init) for k in ks]
    silhouettes = np.array([r.mean_silhouette for r in results])
    best_idx = int(np.argmax(silhouettes))  # first max, i.e. smallest k on ties
    return KSweepResult(ks, silhouettes, int(ks[best_idx]), results[best_idx])
