"""Sentence embedding backends.

Two backends share one contract: `embed(text)` returns a finite, L2-normalized
vector, deterministic for a fixed backend configuration. The mock backend hashes
whitespace tokens into seeded Gaussian directions and averages them, so it needs
no network or model files and gives synthetic corpora a controllable geometry.
"""

from __future__ import annotations

import hashlib
import threading

import numpy as np

from .errors import VeriloopError

DEFAULT_MOCK_DIM = 16
DEFAULT_PRETRAINED_MODEL = "sentence-transformers/all-MiniLM-L6-v2"


class EncoderBackend:
    """Shared embed/embed_batch contract; subclasses implement _embed_one."""

    dim: int

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise VeriloopError("cannot embed empty text")
        vec = self._embed_one(text)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0 or not np.isfinite(norm):
            raise VeriloopError("embedding has zero or non-finite norm")
        return vec / norm

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        out = []
        for idx, text in enumerate(texts):
            try:
                out.append(self.embed(text))
            except VeriloopError as exc:
                raise VeriloopError(f"embed_batch failed at index {idx}: {exc}") from exc
        return out

    def _embed_one(self, text: str) -> np.ndarray:
        raise NotImplementedError


class MockEncoder(EncoderBackend):
    """Deterministic offline encoder: mean of per-token seeded Gaussian vectors."""

    def __init__(self, dim: int = DEFAULT_MOCK_DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._token_cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _token_vector(self, token: str) -> np.ndarray:
        with self._lock:
            cached = self._token_cache.get(token)
        if cached is not None:
            return cached
        digest = hashlib.blake2b(f"{self.seed}:{token}".encode("utf-8"), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        vec = rng.standard_normal(self.dim)
        with self._lock:
            self._token_cache[token] = vec
        return vec

    def _embed_one(self, text: str) -> np.ndarray:
        tokens = text.lower().split()
        return np.mean([self._token_vector(t) for t in tokens], axis=0)


class PretrainedEncoder(EncoderBackend):
    """Sentence-transformer backend, loaded lazily; a local model, not a paid API."""

    def __init__(self, model_name: str = DEFAULT_PRETRAINED_MODEL):
        self.model_name = model_name
        self._model = None
        self._lock = threading.Lock()
        self.dim = 0

    def _load(self):
        with self._lock:
            if self._model is None:
                try:
                    from sentence_transformers import SentenceTransformer
                except ImportError as exc:
                    raise VeriloopError(
                        "pretrained backend requires the sentence-transformers package"
                    ) from exc
                try:
                    self._model = SentenceTransformer(self.model_name)
                except Exception as exc:
                    raise VeriloopError(f"failed to load encoder model {self.model_name!r}: {exc}") from exc
                self.dim = int(self._model.get_sentence_embedding_dimension())
        return self._model

    def _embed_one(self, text: str) -> np.ndarray:
        model = self._load()
        return np.asarray(model.encode([text], show_progress_bar=False)[0], dtype=np.float64)

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        for idx, text in enumerate(texts):
            if not text or not text.strip():
                raise VeriloopError(f"embed_batch failed at index {idx}: cannot embed empty text")
        if not texts:
            return []
        model = self._load()
        raw = model.encode(list(texts), show_progress_bar=False)
        out = []
        for vec in np.asarray(raw, dtype=np.float64):
            norm = float(np.linalg.norm(vec))
            if norm == 0.0 or not np.isfinite(norm):
                raise VeriloopError("embedding has zero or non-finite norm")
            out.append(vec / norm)
        return out


def make_encoder(config: dict | None = None) -> EncoderBackend:
    """Build a backend from {"backend": "pretrained"|"mock", "dim": int, "seed": int}."""
    config = config or {}
    backend = config.get("backend", "mock")
    if backend == "mock":
        return MockEncoder(dim=int(config.get("dim", DEFAULT_MOCK_DIM)), seed=int(config.get("seed", 0)))
    if backend == "pretrained":
        return PretrainedEncoder(model_name=config.get("model", DEFAULT_PRETRAINED_MODEL))
    raise VeriloopError(f"unknown encoder backend {backend!r}")
