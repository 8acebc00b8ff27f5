"""Lloyd k-means (euclidean) and spherical k-means (cosine)."""

from __future__ import annotations

import numpy as np


def _unit(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("spherical k-means cannot normalize a zero vector")
    return X / norms


def _dissimilarity(X, C, spherical: bool) -> np.ndarray:
    if spherical:
        return 1.0 - X @ C.T
    return np.sum((X[:, None, :] - C[None, :, :]) ** 2, axis=-1)


def _plus_plus(X, k, rng, spherical: bool) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d = _dissimilarity(X, X[chosen], spherical)[:, 0]
    for _ in range(1, k):
        d = np.maximum(d, 0.0)
        total = d.sum()
        if total <= 0:
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        else:
            nxt = int(rng.choice(n, p=d / total))
        chosen.append(nxt)
        d = np.minimum(d, _dissimilarity(X, X[[nxt]], spherical)[:, 0])
    return X[chosen].copy()


def kmeans(X, k: int, metric: str = "euclidean", seed: int = 0, max_rounds: int = 100):
    """Cluster rows of ``X`` into ``k`` groups.

    ``metric="cosine"`` runs spherical k-means: points and centroids live on
    the unit sphere, assignment maximizes the dot product and each centroid
    is the normalized mean of its members. Seeding is k-means++ in both
    cases. A cluster that empties is re-seeded at the point farthest from
    its current centroid.

    Returns:
        ``(centroids, assignments)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got {k}")
    if metric not in ("euclidean", "cosine"):
        raise ValueError(f"unknown metric {metric!r}")
    spherical = metric == "cosine"
    if spherical:
        X = _unit(X)
    rng = np.random.default_rng(seed)
    C = _plus_plus(X, k, rng, spherical)

    assign = None
    for _ in range(max_rounds):
        D = _dissimilarity(X, C, spherical)
        new = np.argmin(D, axis=1)
        for j in range(k):
            if not np.any(new == j):
                own = D[np.arange(n), new].copy()
                own[np.bincount(new, minlength=k)[new] <= 1] = -np.inf
                far = int(np.argmax(own))
                new[far] = j
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(k):
            m = X[assign == j].mean(axis=0)
            if spherical:
                norm = np.linalg.norm(m)
                m = m / norm if norm > 0 else X[assign == j][0]
            C[j] = m
    return C, assign
