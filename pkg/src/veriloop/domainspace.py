"""Unsupervised domain discovery: cosine k-means, silhouette-based k selection,
and soft membership vectors used as the domain embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, VeriloopError

KMEANS_MAX_ITER = 300
KMEANS_RESTARTS = 5
WARM_START_TOLERANCE = 0.01
SILHOUETTE_SAMPLE_CAP = 3000  # larger fits score k on a seeded subsample


@dataclass
class DomainSpace:
    k: int
    centroids: np.ndarray  # k x D, plain means of member embeddings
    assignments: dict[str, int]
    silhouette: float

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "assignments": self.assignments,
            "silhouette": self.silhouette,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "DomainSpace":
        return cls(
            k=int(payload["k"]),
            centroids=np.asarray(payload["centroids"], dtype=np.float64),
            assignments={str(k): int(v) for k, v in payload["assignments"].items()},
            silhouette=float(payload["silhouette"]),
        )


def cosine_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise 1 - cosine similarity between rows of x and rows of y."""
    xn = x / np.linalg.norm(x, axis=1, keepdims=True)
    yn = y / np.linalg.norm(y, axis=1, keepdims=True)
    return 1.0 - xn @ yn.T


def kmeans_cosine(
    points: np.ndarray,
    k: int,
    seed: int,
    restarts: int = KMEANS_RESTARTS,
    max_iter: int = KMEANS_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Lloyd iterations under cosine distance with k-means++ seeding.

    Returns (labels, centroids, inertia); best of `restarts` by inertia.
    Centroids are plain means, so the fixpoint property (reassignment changes
    nothing after convergence) holds under the same cosine assignment rule.
    """
    n = points.shape[0]
    if n < k:
        raise VeriloopError(f"cannot fit {k} clusters to {n} points")
    best: tuple[np.ndarray, np.ndarray, float] | None = None
    for restart in range(restarts):
        rng = np.random.default_rng([seed, k, restart])
        centroids = _plus_plus_init(points, k, rng)
        labels = np.zeros(n, dtype=np.int64)
        for _ in range(max_iter):
            dist = cosine_distances(points, centroids)
            new_labels = np.argmin(dist, axis=1)
            new_labels = _fix_empty_clusters(points, new_labels, dist, k)
            centroids = np.vstack([points[new_labels == j].mean(axis=0) for j in range(k)])
            if np.array_equal(new_labels, labels):
                labels = new_labels
                break
            labels = new_labels
        inertia = float(cosine_distances(points, centroids)[np.arange(n), labels].sum())
        if best is None or inertia < best[2]:
            best = (labels, centroids, inertia)
    assert best is not None
    return best


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        dist = cosine_distances(points, points[chosen]).min(axis=1)
        weights = dist**2
        total = weights.sum()
        if total <= 0:
            remaining = [i for i in range(n) if i not in chosen]
            chosen.append(int(rng.choice(remaining)))
            continue
        chosen.append(int(rng.choice(n, p=weights / total)))
    return points[chosen].copy()


def _fix_empty_clusters(points: np.ndarray, labels: np.ndarray, dist: np.ndarray, k: int) -> np.ndarray:
    labels = labels.copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        own = dist[np.arange(len(labels)), labels]
        # steal the point farthest from its current centroid (ties: lowest index)
        candidate = int(np.argmax(own))
        labels[candidate] = j
        dist = dist.copy()
        dist[candidate, :] = np.inf
    return labels


def silhouette_cosine(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over all points, on cosine distance; singletons score 0."""
    n = points.shape[0]
    clusters = np.unique(labels)
    onehot = (labels[:, None] == clusters[None, :]).astype(np.float64)
    counts = onehot.sum(axis=0)
    sums = cosine_distances(points, points) @ onehot  # n x k total distances
    own_col = np.searchsorted(clusters, labels)
    own_counts = counts[own_col]
    with np.errstate(invalid="ignore", divide="ignore"):
        a = sums[np.arange(n), own_col] / np.maximum(own_counts - 1, 1)
        means = sums / counts[None, :]
        means[np.arange(n), own_col] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        scores = np.where((own_counts <= 1) | (denom == 0), 0.0, (b - a) / np.where(denom == 0, 1, denom))
    return float(scores.mean())


def fit(
    embeddings: np.ndarray | list[np.ndarray],
    k_min: int = 2,
    k_max: int = 10,
    seed: int = 0,
    ids: list[str] | None = None,
    warm_k: int | None = None,
    warm_silhouette: float | None = None,
) -> DomainSpace:
    """Select k in [k_min, k_max] by maximal silhouette and return the fitted space.

    Ties break toward smaller k. If a previous round's (k, silhouette) is given
    and refitting at that k moves the score by less than WARM_START_TOLERANCE,
    the scan is skipped (the score has stabilized).
    """
    points = np.asarray(embeddings, dtype=np.float64)
    n = points.shape[0]
    if not 2 <= k_min <= k_max:
        raise VeriloopError(f"need 2 <= k_min <= k_max, got [{k_min}, {k_max}]")
    if n <= k_max:
        raise VeriloopError(f"need more than k_max={k_max} points, got {n}")
    if ids is None:
        ids = [str(i) for i in range(n)]
    if len(ids) != n:
        raise VeriloopError("ids length must match embeddings")
    if float(cosine_distances(points, points).max()) < 1e-12:
        raise DegenerateGeometryError("degenerate geometry: all points identical")

    def score(labels: np.ndarray) -> float:
        if n <= SILHOUETTE_SAMPLE_CAP:
            return silhouette_cosine(points, labels)
        sample = np.random.default_rng([seed, 41]).choice(n, size=SILHOUETTE_SAMPLE_CAP, replace=False)
        return silhouette_cosine(points[sample], labels[sample])

    if warm_k is not None and warm_silhouette is not None and k_min <= warm_k <= k_max:
        labels, centroids, _ = kmeans_cosine(points, warm_k, seed)
        sil = score(labels)
        if abs(sil - warm_silhouette) < WARM_START_TOLERANCE:
            return DomainSpace(
                k=warm_k,
                centroids=centroids,
                assignments={ids[i]: int(labels[i]) for i in range(n)},
                silhouette=sil,
            )

    best: tuple[float, int, np.ndarray, np.ndarray] | None = None
    for k in range(k_min, k_max + 1):
        labels, centroids, _ = kmeans_cosine(points, k, seed)
        sil = score(labels)
        if best is None or sil > best[0] + 1e-12:
            best = (sil, k, labels, centroids)
    assert best is not None
    sil, k, labels, centroids = best
    return DomainSpace(
        k=k,
        centroids=centroids,
        assignments={ids[i]: int(labels[i]) for i in range(n)},
        silhouette=sil,
    )


def membership(x: np.ndarray, space: DomainSpace) -> np.ndarray:
    """Softmax over cosine similarities to each centroid; entries sum to 1."""
    x = np.asarray(x, dtype=np.float64)
    norm = float(np.linalg.norm(x))
    if norm == 0 or not np.isfinite(norm):
        raise VeriloopError("membership undefined for zero-norm vector")
    if x.shape[0] != space.centroids.shape[1]:
        raise VeriloopError(
            f"dimension mismatch: x has {x.shape[0]}, centroids have {space.centroids.shape[1]}"
        )
    cnorm = np.linalg.norm(space.centroids, axis=1)
    sims = (space.centroids @ x) / (cnorm * norm)
    exp = np.exp(sims - sims.max())
    return exp / exp.sum()


def domain_embedding(record, space: DomainSpace, encoder) -> np.ndarray:
    """Membership vector of a record's embedded text; the classifier's domain target."""
    return membership(encoder.embed(record.text), space)
