"""Acquisition strategies: the domain-aware cold-start/entropy selector and the
four global baselines (random, max-entropy, least-confidence, k-means diversity).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domainspace import DomainSpace, cosine_distances, kmeans_cosine
from .errors import VeriloopError

DEFAULT_EPSILON = 1e-6

STRATEGIES = (
    "domain_aware_cold",
    "domain_aware_entropy",
    "random",
    "max_entropy",
    "least_confidence",
    "kmeans_diversity",
)


@dataclass
class Allocation:
    per_cluster: dict[int, int]
    total: int


@dataclass
class AcquisitionResult:
    selected_ids: list[str]
    strategy: str
    scores: dict[str, float] = field(default_factory=dict)


def binary_entropy(p: float | np.ndarray) -> float | np.ndarray:
    """H(p) in nats, with 0*log(0) taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise VeriloopError("probability outside [0, 1]")
    out = np.zeros_like(p)
    interior = (p > 0) & (p < 1)
    q = p[interior]
    out[interior] = -(q * np.log(q) + (1 - q) * np.log(1 - q))
    return float(out) if out.ndim == 0 else out


def cluster_weights(space: DomainSpace, pool_ids: list[str], epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Normalized inverse-size weights over clusters, counted on the pool only."""
    if epsilon <= 0:
        raise VeriloopError("epsilon must be positive")
    if not pool_ids:
        raise VeriloopError("empty pool")
    counts = np.zeros(space.k)
    for rid in pool_ids:
        counts[space.assignments[rid]] += 1
    w = 1.0 / (counts + epsilon)
    return w / w.sum()


def allocate(m_total: int, weights: np.ndarray, capacities: list[int]) -> Allocation:
    """Per-cluster quotas: ceil(M * w_j), repaired to sum exactly to M.

    Over-allocation is shed from the cluster with the largest quota (ties:
    larger capacity, then lower index); capacity-clamped shortfall is refilled
    into the cluster with the most remaining capacity (ties: lower index).
    """
    caps = np.asarray(capacities, dtype=np.int64)
    if m_total > caps.sum():
        raise VeriloopError(f"budget {m_total} exceeds total pool capacity {int(caps.sum())}")
    m = np.minimum(np.ceil(m_total * np.asarray(weights, dtype=np.float64)).astype(np.int64), caps)
    while m.sum() > m_total:
        candidates = np.flatnonzero(m == m.max())
        candidates = candidates[caps[candidates] == caps[candidates].max()]
        m[candidates[0]] -= 1
    while m.sum() < m_total:
        remaining = caps - m
        candidates = np.flatnonzero(remaining == remaining.max())
        m[candidates[0]] += 1
    return Allocation(per_cluster={j: int(m[j]) for j in range(len(m))}, total=int(m.sum()))


def cold_start_select(
    space: DomainSpace,
    pool_ids: list[str],
    embeddings: dict[str, np.ndarray],
    allocation: Allocation,
) -> AcquisitionResult:
    """Round-1 selection: per cluster, the quota of points closest to the centroid."""
    selected: list[str] = []
    scores: dict[str, float] = {}
    for j in range(space.k):
        quota = allocation.per_cluster.get(j, 0)
        if quota == 0:
            continue
        members = [rid for rid in pool_ids if space.assignments[rid] == j]
        vecs = np.vstack([embeddings[rid] for rid in members])
        dists = cosine_distances(vecs, space.centroids[j : j + 1])[:, 0]
        ranked = sorted(zip(dists, members))
        for dist, rid in ranked[:quota]:
            selected.append(rid)
            scores[rid] = float(dist)
    return AcquisitionResult(selected_ids=selected, strategy="domain_aware_cold", scores=scores)


def entropy_select(
    space: DomainSpace,
    pool_ids: list[str],
    allocation: Allocation,
    probs: dict[str, float],
) -> AcquisitionResult:
    """Later rounds: per cluster, the quota of points with highest predictive entropy."""
    missing = [rid for rid in pool_ids if rid not in probs]
    if missing:
        raise VeriloopError(f"probabilities missing for {len(missing)} pool records (e.g. {missing[0]!r})")
    selected: list[str] = []
    scores: dict[str, float] = {}
    for j in range(space.k):
        quota = allocation.per_cluster.get(j, 0)
        if quota == 0:
            continue
        members = [rid for rid in pool_ids if space.assignments[rid] == j]
        ranked = sorted(((-float(binary_entropy(probs[rid])), rid) for rid in members))
        for neg_h, rid in ranked[:quota]:
            selected.append(rid)
            scores[rid] = -neg_h
    return AcquisitionResult(selected_ids=selected, strategy="domain_aware_entropy", scores=scores)


def baseline_select(
    strategy: str,
    pool_ids: list[str],
    m_total: int,
    probs: dict[str, float] | None = None,
    embeddings: dict[str, np.ndarray] | None = None,
    seed: int = 0,
) -> AcquisitionResult:
    """Global (quota-free) baseline strategies over the whole pool."""
    m_total = min(m_total, len(pool_ids))
    if strategy == "random":
        rng = np.random.default_rng([seed, 101])
        picked = list(rng.choice(np.asarray(pool_ids, dtype=object), size=m_total, replace=False))
        return AcquisitionResult(selected_ids=[str(r) for r in picked], strategy=strategy)

    if strategy in ("max_entropy", "least_confidence"):
        if probs is None:
            raise VeriloopError(f"strategy {strategy!r} needs classifier probabilities")
        if strategy == "max_entropy":
            ranked = sorted(((-float(binary_entropy(probs[rid])), rid) for rid in pool_ids))
            scores = {rid: -neg for neg, rid in ranked}
        else:
            ranked = sorted(((max(probs[rid], 1 - probs[rid]), rid) for rid in pool_ids))
            scores = {rid: conf for conf, rid in ranked}
        chosen = [rid for _, rid in ranked[:m_total]]
        return AcquisitionResult(selected_ids=chosen, strategy=strategy, scores={r: scores[r] for r in chosen})

    if strategy == "kmeans_diversity":
        if embeddings is None:
            raise VeriloopError("kmeans_diversity needs embeddings")
        ids = sorted(pool_ids)
        points = np.vstack([embeddings[rid] for rid in ids])
        labels, centroids, _ = kmeans_cosine(points, m_total, seed=seed, restarts=1)
        selected: list[str] = []
        scores = {}
        for j in range(m_total):
            members = np.flatnonzero(labels == j)
            dists = cosine_distances(points[members], centroids[j : j + 1])[:, 0]
            order = np.lexsort((members, dists))
            best = members[order[0]]
            selected.append(ids[best])
            scores[ids[best]] = float(dists[order[0]])
        return AcquisitionResult(selected_ids=selected, strategy=strategy, scores=scores)

    raise VeriloopError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
