"""Seeded flat clustering for profile feature vectors.

Two alternating-optimization clusterers over small dense feature matrices:
K-means with k-means++ seeding and restarts, and fuzzy c-means with a
configurable fuzzifier.  Both expose their per-iteration objective traces so
callers can verify the descent property, and both are fully deterministic
given a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError

DEFAULT_RESTARTS = 20
DEFAULT_MAX_ITER = 100
DEFAULT_FUZZIFIER = 2.0
_CONVERGENCE_TOL = 1e-10
_ZERO_DISTANCE = 1e-12


@dataclass(frozen=True)
class KMeansResult:
    """Hard partition of a point set with its objective history."""

    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_trace: np.ndarray = field(repr=False)
    n_iter: int = 0

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]


@dataclass(frozen=True)
class FuzzyCMeansResult:
    """Soft partition of a point set with its objective history."""

    memberships: np.ndarray
    centroids: np.ndarray
    objective: float
    objective_trace: np.ndarray = field(repr=False)
    n_iter: int = 0

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.memberships, axis=1)


def _validated_points(points: np.ndarray, n_clusters: int) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ConfigError("points must be a non-empty 2-D array")
    if not np.all(np.isfinite(points)):
        raise ConfigError("points must be finite")
    if n_clusters < 1 or n_clusters > points.shape[0]:
        raise ConfigError(
            f"cluster count {n_clusters} outside [1, {points.shape[0]}]")
    return points


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (n_points, n_centroids)."""
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _plus_plus_init(points: np.ndarray, n_clusters: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Spread-out initial centroids via squared-distance-weighted sampling."""
    n = points.shape[0]
    centroids = np.empty((n_clusters, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    closest = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, n_clusters):
        total = closest.sum()
        if total <= 0.0:
            centroids[j] = points[rng.integers(n)]
        else:
            centroids[j] = points[rng.choice(n, p=closest / total)]
        closest = np.minimum(
            closest, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray,
           max_iter: int) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Alternate assignment and centroid updates until labels stabilize."""
    n_clusters = centroids.shape[0]
    labels = np.full(points.shape[0], -1)
    trace: list[float] = []
    for _ in range(max_iter):
        distances = _squared_distances(points, centroids)
        new_labels = np.argmin(distances, axis=1)
        # Re-seed any emptied cluster with the point farthest from its
        # assigned centroid so every cluster stays populated.  Only points
        # in multi-member clusters are eligible, otherwise the donor cluster
        # would empty in turn; with n >= k a multi-member cluster always
        # exists while any cluster is empty.
        for j in range(n_clusters):
            if not np.any(new_labels == j):
                residuals = distances[np.arange(len(points)), new_labels]
                counts = np.bincount(new_labels, minlength=n_clusters)
                residuals[counts[new_labels] <= 1] = -1.0
                worst = int(np.argmax(residuals))
                new_labels[worst] = j
                distances[worst] = 0.0
        trace.append(float(
            distances[np.arange(len(points)), new_labels].sum()))
        converged = np.array_equal(new_labels, labels)
        labels = new_labels
        for j in range(n_clusters):
            centroids[j] = points[labels == j].mean(axis=0)
        if converged:
            break
    return labels, centroids, trace


def kmeans_cluster(points: np.ndarray, n_clusters: int, rng_seed: int,
                   n_restarts: int = DEFAULT_RESTARTS,
                   max_iter: int = DEFAULT_MAX_ITER) -> KMeansResult:
    """Best-of-restarts K-means partition of ``points``.

    Each restart draws k-means++ initial centroids from a generator seeded
    with ``rng_seed`` and runs Lloyd iterations until the assignment
    stabilizes or ``max_iter`` is reached.  The restart with the lowest
    final within-cluster sum of squares wins; ties keep the earliest.
    """
    points = _validated_points(points, n_clusters)
    if n_restarts < 1:
        raise ConfigError("n_restarts must be at least 1")
    rng = np.random.default_rng(rng_seed)
    best: tuple[np.ndarray, np.ndarray, list[float]] | None = None
    for _ in range(n_restarts):
        init = _plus_plus_init(points, n_clusters, rng)
        labels, centroids, trace = _lloyd(points, init, max_iter)
        if best is None or trace[-1] < best[2][-1]:
            best = (labels, centroids, trace)
    labels, centroids, trace = best
    return KMeansResult(
        labels=labels,
        centroids=centroids,
        inertia=trace[-1],
        inertia_trace=np.asarray(trace),
        n_iter=len(trace),
    )


def fuzzy_cmeans(points: np.ndarray, n_clusters: int, rng_seed: int,
                 fuzzifier: float = DEFAULT_FUZZIFIER,
                 max_iter: int = 300,
                 tol: float = 1e-9) -> FuzzyCMeansResult:
    """Fuzzy c-means soft partition of ``points``.

    Memberships are initialized from a seeded Dirichlet-like draw and the
    usual two-step update (weighted centroids, inverse-distance memberships)
    runs until the objective improvement drops below ``tol``.  A point that
    coincides with one or more centroids splits its membership equally over
    those centroids.
    """
    points = _validated_points(points, n_clusters)
    if fuzzifier <= 1.0:
        raise ConfigError("fuzzifier must exceed 1")
    rng = np.random.default_rng(rng_seed)
    memberships = rng.random((points.shape[0], n_clusters)) + 1e-3
    memberships /= memberships.sum(axis=1, keepdims=True)
    exponent = 1.0 / (fuzzifier - 1.0)
    trace: list[float] = []
    for _ in range(max_iter):
        weights = memberships ** fuzzifier
        centroids = (weights.T @ points) / weights.sum(axis=0)[:, None]
        distances = _squared_distances(points, centroids)
        trace.append(float(np.sum(weights * distances)))
        at_centroid = distances <= _ZERO_DISTANCE
        ratios = (1.0 / np.maximum(distances, _ZERO_DISTANCE)) ** exponent
        memberships = ratios / ratios.sum(axis=1, keepdims=True)
        coincident = at_centroid.any(axis=1)
        if np.any(coincident):
            crisp = at_centroid[coincident].astype(float)
            memberships[coincident] = crisp / crisp.sum(axis=1, keepdims=True)
        if len(trace) >= 2 and trace[-2] - trace[-1] < tol:
            break
    weights = memberships ** fuzzifier
    centroids = (weights.T @ points) / weights.sum(axis=0)[:, None]
    final = float(np.sum(weights * _squared_distances(points, centroids)))
    trace.append(final)
    return FuzzyCMeansResult(
        memberships=memberships,
        centroids=centroids,
        objective=final,
        objective_trace=np.asarray(trace),
        n_iter=len(trace),
    )
