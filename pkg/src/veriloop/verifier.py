"""Label-noise detection.

A small cross-validated text probe (averaged n-gram embeddings + linear softmax
head, SGD with a linearly decaying rate) produces out-of-sample class
probabilities; confident-learning statistics over those probabilities rank the
most suspicious labels and cut the human re-annotation queue.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import VeriloopError

PROBE_LR = 0.1
PROBE_DIM = 100
PROBE_NGRAM = 3
PROBE_FOLDS = 5
PROBE_EPOCHS = 5
PROBE_MIN_UPDATES = 2000  # tiny training sets get extra epochs to converge


@dataclass
class NoiseReport:
    thresholds: list[float]
    confident_joint: list[list[int]]
    q_hat: list[list[float]]
    flagged: list[str]
    human_queue: list[str]
    self_probs: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "thresholds": self.thresholds,
            "confident_joint": self.confident_joint,
            "q_hat": self.q_hat,
            "flagged": self.flagged,
            "human_queue": self.human_queue,
            "self_probs": self.self_probs,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "NoiseReport":
        return cls(
            thresholds=[float(t) for t in payload["thresholds"]],
            confident_joint=[[int(c) for c in row] for row in payload["confident_joint"]],
            q_hat=[[float(q) for q in row] for row in payload["q_hat"]],
            flagged=list(payload["flagged"]),
            human_queue=list(payload["human_queue"]),
            self_probs={str(k): float(v) for k, v in payload.get("self_probs", {}).items()},
        )


def _ngram_features(text: str, max_n: int) -> list[str]:
    tokens = text.lower().split()
    feats = []
    for n in range(1, max_n + 1):
        feats.extend("_".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return feats


class ProbeModel:
    """Bag-of-n-grams linear softmax classifier trained by per-sample SGD."""

    def __init__(
        self,
        num_classes: int,
        dim: int = PROBE_DIM,
        lr: float = PROBE_LR,
        ngram: int = PROBE_NGRAM,
        epochs: int = PROBE_EPOCHS,
        seed: int = 0,
    ):
        self.num_classes = num_classes
        self.dim = dim
        self.lr = lr
        self.ngram = ngram
        self.epochs = epochs
        self.seed = seed
        self.vocab: dict[str, int] = {}
        self.embeddings: np.ndarray | None = None
        self.head_w: np.ndarray | None = None
        self.head_b: np.ndarray | None = None

    def train(self, texts: list[str], labels: np.ndarray) -> "ProbeModel":
        for text in texts:
            for feat in _ngram_features(text, self.ngram):
                if feat not in self.vocab:
                    self.vocab[feat] = len(self.vocab)
        rng = np.random.default_rng([self.seed, 13])
        self.embeddings = rng.uniform(-1.0 / self.dim, 1.0 / self.dim, size=(max(len(self.vocab), 1), self.dim))
        self.head_w = np.zeros((self.num_classes, self.dim))
        self.head_b = np.zeros(self.num_classes)

        feature_ids = [
            np.asarray([self.vocab[f] for f in _ngram_features(t, self.ngram)], dtype=np.int64)
            for t in texts
        ]
        n = len(texts)
        epochs = max(self.epochs, -(-PROBE_MIN_UPDATES // max(n, 1)))
        total_steps = max(epochs * n, 1)
        step = 0
        for epoch in range(epochs):
            order = np.random.default_rng([self.seed, 17, epoch]).permutation(n)
            for i in order:
                feats = feature_ids[i]
                if len(feats) == 0:
                    step += 1
                    continue
                hidden = self.embeddings[feats].mean(axis=0)
                probs = _softmax(self.head_w @ hidden + self.head_b)
                grad_logits = probs.copy()
                grad_logits[labels[i]] -= 1.0
                lr_t = self.lr * (1.0 - step / total_steps)
                grad_hidden = self.head_w.T @ grad_logits
                self.head_w -= lr_t * np.outer(grad_logits, hidden)
                self.head_b -= lr_t * grad_logits
                self.embeddings[feats] -= lr_t * grad_hidden / len(feats)
                step += 1
        return self

    def predict_probs(self, texts: list[str]) -> np.ndarray:
        assert self.embeddings is not None and self.head_w is not None
        out = np.zeros((len(texts), self.num_classes))
        for row, text in enumerate(texts):
            feats = [self.vocab[f] for f in _ngram_features(text, self.ngram) if f in self.vocab]
            hidden = self.embeddings[feats].mean(axis=0) if feats else np.zeros(self.dim)
            out[row] = _softmax(self.head_w @ hidden + self.head_b)
        return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def _fold_of(record_id: str, folds: int, seed: int) -> int:
    digest = hashlib.blake2b(f"{seed}:{record_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % folds


def probe_oos_probs(
    texts: list[str],
    noisy_labels: np.ndarray | list[int],
    folds: int = PROBE_FOLDS,
    seed: int = 0,
    ids: list[str] | None = None,
    num_classes: int | None = None,
    probe_kwargs: dict | None = None,
) -> np.ndarray:
    """Out-of-sample class probabilities from fold models that never saw the sample.

    Folds are assigned by a stable hash of each record id, so the output is
    independent of input ordering.
    """
    labels = np.asarray(noisy_labels, dtype=np.int64)
    n = len(texts)
    if ids is None:
        ids = [str(i) for i in range(n)]
    if len(ids) != n or len(labels) != n:
        raise VeriloopError("texts, labels, and ids must have equal length")
    k = num_classes if num_classes is not None else int(labels.max()) + 1
    counts = np.bincount(labels, minlength=k)
    thin = [c for c in range(k) if 0 < counts[c] < folds]
    if np.any(counts == 0) or thin:
        raise VeriloopError(f"every class needs at least {folds} samples; counts={counts.tolist()}")

    fold_ids = np.asarray([_fold_of(rid, folds, seed) for rid in ids])
    probs = np.zeros((n, k))
    for fold in range(folds):
        holdout = np.flatnonzero(fold_ids == fold)
        train_idx = np.flatnonzero(fold_ids != fold)
        if len(holdout) == 0:
            continue
        # canonical order: training is order-independent of the caller's layout
        train_idx = sorted(train_idx, key=lambda i: ids[i])
        model = ProbeModel(num_classes=k, seed=seed * folds + fold, **(probe_kwargs or {}))
        model.train([texts[i] for i in train_idx], labels[np.asarray(train_idx, dtype=np.int64)])
        probs[holdout] = model.predict_probs([texts[i] for i in holdout])
    return probs


def class_thresholds(probs: np.ndarray, noisy_labels: np.ndarray | list[int]) -> np.ndarray:
    """t_j: mean self-class probability among samples carrying noisy label j."""
    labels = np.asarray(noisy_labels, dtype=np.int64)
    k = probs.shape[1]
    t = np.zeros(k)
    for j in range(k):
        mask = labels == j
        if not mask.any():
            raise VeriloopError(f"no samples labelled {j}; threshold undefined")
        t[j] = probs[mask, j].mean()
    return t


def confident_joint(probs: np.ndarray, noisy_labels: np.ndarray | list[int], t: np.ndarray) -> np.ndarray:
    """Count matrix C[i][j]: noisy label i, confidently inferred true label j.

    A sample counts toward the class with the highest probability among classes
    whose threshold it exceeds; samples exceeding no threshold are uncounted.
    """
    labels = np.asarray(noisy_labels, dtype=np.int64)
    k = probs.shape[1]
    joint = np.zeros((k, k), dtype=np.int64)
    for row, noisy in enumerate(labels):
        above = [j for j in range(k) if probs[row, j] >= t[j]]
        if not above:
            continue
        best = max(above, key=lambda j: (probs[row, j], -j))
        joint[noisy, best] += 1
    return joint


def estimate_q(joint: np.ndarray, noisy_label_counts: np.ndarray | list[int]) -> np.ndarray:
    """Calibrate C by class counts and normalize to a joint distribution.

    A class whose C row is all zeros keeps its full mass on the diagonal (no
    evidence of noise is not evidence of noise).
    """
    counts = np.asarray(noisy_label_counts, dtype=np.float64)
    k = joint.shape[0]
    mass = np.zeros((k, k), dtype=np.float64)
    for i in range(k):
        row_sum = joint[i].sum()
        if row_sum == 0:
            mass[i, i] = counts[i]
        else:
            mass[i] = joint[i] / row_sum * counts[i]
    total = mass.sum()
    if total == 0:
        raise VeriloopError("cannot calibrate an empty joint")
    return mass / total


def flag_noisy(
    q_hat: np.ndarray,
    probs: np.ndarray,
    noisy_labels: np.ndarray | list[int],
    ids: list[str],
    rho: float = 0.2,
    thresholds: np.ndarray | None = None,
    joint: np.ndarray | None = None,
) -> NoiseReport:
    """Select the per-class suspects with lowest self-probability; the top
    rho fraction (lowest self-probability overall) forms the human queue."""
    if not 0 <= rho <= 1:
        raise VeriloopError("rho must be in [0, 1]")
    labels = np.asarray(noisy_labels, dtype=np.int64)
    n = len(labels)
    k = q_hat.shape[0]
    flagged_entries: list[tuple[float, str]] = []
    for i in range(k):
        off_mass = q_hat[i].sum() - q_hat[i, i]
        quota = int(math.floor(n * off_mass + 0.5))
        members = np.flatnonzero(labels == i)
        ranked = sorted((float(probs[m, i]), ids[m]) for m in members)
        flagged_entries.extend(ranked[: min(quota, len(ranked))])
    flagged_entries.sort()
    flagged = [rid for _, rid in flagged_entries]
    queue_len = math.ceil(rho * len(flagged))
    return NoiseReport(
        thresholds=[float(x) for x in (thresholds if thresholds is not None else np.zeros(k))],
        confident_joint=(joint if joint is not None else np.zeros((k, k), dtype=np.int64)).tolist(),
        q_hat=q_hat.tolist(),
        flagged=flagged,
        human_queue=flagged[:queue_len],
        self_probs={ids[m]: float(probs[m, labels[m]]) for m in range(n)},
    )


def verify(
    texts: list[str],
    noisy_labels: np.ndarray | list[int],
    ids: list[str],
    rho: float = 0.2,
    folds: int = PROBE_FOLDS,
    seed: int = 0,
    probe_kwargs: dict | None = None,
) -> NoiseReport:
    """Full verification pass: probe -> thresholds -> confident joint -> flags."""
    labels = np.asarray(noisy_labels, dtype=np.int64)
    probs = probe_oos_probs(texts, labels, folds=folds, seed=seed, ids=ids, probe_kwargs=probe_kwargs)
    t = class_thresholds(probs, labels)
    joint = confident_joint(probs, labels, t)
    counts = np.bincount(labels, minlength=probs.shape[1])
    q_hat = estimate_q(joint, counts)
    return flag_noisy(q_hat, probs, labels, ids, rho=rho, thresholds=t, joint=joint)
