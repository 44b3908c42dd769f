"""Lloyd k-means with k-means++ seeding, written out in numpy so the
assignment and update steps stay inspectable and bitwise reproducible.

Used in three places: mining pseudo-labels from pooled features, seeding the
prototype memories, and compressing prototypes down to category count at
evaluation time. All three need deterministic, auditable behavior more than
raw speed, which is why this is not delegated to a library implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .validation import as_float_matrix, as_int_vector, check_finite


@dataclass
class KMeansResult:
    centers: np.ndarray  # (k, D)
    labels: np.ndarray  # (N,) values in 0..k-1
    inertia: float
    n_iter: int
    inertia_history: list[float] = field(default_factory=list)


def _pairwise_sq(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        (x**2).sum(axis=1)[:, None]
        - 2.0 * x @ centers.T
        + (centers**2).sum(axis=1)[None, :]
    )
    # rounding can push true zeros slightly negative
    return np.maximum(d2, 0.0)


def assign(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest center per row; ties go to the lowest index."""
    return np.argmin(_pairwise_sq(x, centers), axis=1).astype(np.int64)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seed centers: first uniform, then proportional to squared distance
    from the nearest already-chosen center."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[rng.integers(n)]
    d2 = _pairwise_sq(x, centers[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total == 0.0:
            centers[j:] = centers[0]
            return centers
        centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, _pairwise_sq(x, centers[j : j + 1]).ravel())
    return centers


def _lloyd(
    x: np.ndarray, init: np.ndarray, max_iter: int, tol: float
) -> KMeansResult:
    k = init.shape[0]
    centers = init.copy()
    history: list[float] = []
    labels = assign(x, centers)
    for it in range(1, max_iter + 1):
        # update step, with empty clusters reseeded to the farthest point
        new_centers = centers.copy()
        counts = np.bincount(labels, minlength=k)
        d2 = _pairwise_sq(x, centers)
        nearest = d2[np.arange(x.shape[0]), labels]
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(nearest))
            new_centers[j] = x[far]
            labels[far] = j
            nearest[far] = 0.0
            counts[j] = 1
        sums = np.zeros_like(new_centers)
        np.add.at(sums, labels, x)
        counts = np.bincount(labels, minlength=k)
        # a repair move can itself empty a singleton cluster; such a cluster
        # keeps its old center (no points assigned, objective unaffected)
        filled = counts > 0
        new_centers[filled] = sums[filled] / counts[filled, None]

        new_labels = assign(x, new_centers)
        inertia = float(
            _pairwise_sq(x, new_centers)[np.arange(x.shape[0]), new_labels].sum()
        )
        history.append(inertia)
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers, labels = new_centers, new_labels
        if shift <= tol:
            break
    return KMeansResult(centers, labels, history[-1], len(history), history)


def kmeans(
    x: np.ndarray,
    k: int,
    seed: int,
    n_restarts: int = 10,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> KMeansResult:
    """Best of `n_restarts` k-means++-seeded Lloyd runs by final inertia.

    Within one run the recorded inertia sequence is non-increasing: the
    assignment step never raises it and the mean-update step never raises it
    (empty clusters are repaired by reseeding at the point currently
    farthest from its center, which also cannot increase the objective).
    Fully deterministic given (x, k, seed).
    """
    x = as_float_matrix(x, "x")
    check_finite(x, "x")
    if k < 1:
        raise ConfigError("k must be >= 1")
    if x.shape[0] < k:
        raise DataError(f"need at least k={k} rows to form k clusters, got {x.shape[0]}")
    if n_restarts < 1:
        raise ConfigError("n_restarts must be >= 1")
    rng = np.random.default_rng(seed)
    best: KMeansResult | None = None
    for _ in range(n_restarts):
        result = _lloyd(x, _kmeans_pp(x, k, rng), max_iter, tol)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def class_centroids(
    features: np.ndarray, labels: np.ndarray, n_classes: int
) -> tuple[np.ndarray, np.ndarray]:
    """Mean feature per class id and the id's row count.

    Returns (centroids (n_classes, D), counts (n_classes,)). Rows for absent
    classes are zero with count 0; callers decide how to treat them.
    """
    features = as_float_matrix(features, "features")
    labels = as_int_vector(labels, "labels", features.shape[0])
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(
            f"labels must lie in [0, {n_classes}); saw range "
            f"[{labels.min()}, {labels.max()}]"
        )
    counts = np.bincount(labels, minlength=n_classes)
    sums = np.zeros((n_classes, features.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, features)
    centroids = np.zeros_like(sums)
    present = counts > 0
    centroids[present] = sums[present] / counts[present, None]
    return centroids, counts
