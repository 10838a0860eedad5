"""Embedding backends behind one interface.

HashingEmbedder is a deterministic, dependency-free stand-in for a trained
encoder: feature hashing over lowercased whitespace tokens with md5-derived
index and sign, L2-normalized. RemoteEmbedder calls an embedding service
speaking the /embed wire protocol. Both produce float32 row matrices.
"""
from __future__ import annotations

import hashlib
import time
from typing import Protocol, Sequence

import httpx
import numpy as np


class EmbeddingError(RuntimeError):
    """Raised when a batch cannot be embedded; carries the failed ids."""

    def __init__(self, message: str, batch_ids: Sequence[str] = ()) -> None:
        super().__init__(message)
        self.batch_ids = list(batch_ids)


class Embedder(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return a (len(texts), dim) float32 matrix."""
        ...


class HashingEmbedder:
    """Feature-hashing text embedder.

    Each lowercased whitespace token t maps to index md5(t) % dim with sign
    from the next hash bit; token counts accumulate and the vector is
    L2-normalized (zero vector for empty text stays zero). Deterministic
    across processes (no use of builtin hash()), order-invariant over tokens.
    """

    def __init__(self, dim: int = 128) -> None:
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self._cache: dict[str, tuple[int, float]] = {}

    def _slot(self, token: str) -> tuple[int, float]:
        hit = self._cache.get(token)
        if hit is not None:
            return hit
        digest = hashlib.md5(token.encode("utf-8")).digest()
        idx = int.from_bytes(digest[:8], "little") % self.dim
        sign = 1.0 if digest[8] & 1 else -1.0
        slot = (idx, sign)
        if len(self._cache) < 1_000_000:
            self._cache[token] = slot
        return slot

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            for token in text.lower().split():
                idx, sign = self._slot(token)
                out[row, idx] += sign
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        np.divide(out, norms, out=out, where=norms > 0)
        return out


class RemoteEmbedder:
    """Client for an embedding service: POST {base_url}/embed with
    {"texts": [...]} returning {"vectors": [[...], ...]}.

    Retries transport errors and 5xx responses with exponential backoff.
    A custom httpx transport can be injected for in-process testing.
    """

    def __init__(self, base_url: str, dim: int, *, timeout: float = 30.0,
                 retries: int = 3, backoff: float = 0.25,
                 transport: httpx.BaseTransport | None = None) -> None:
        self.base_url = base_url.rstrip("/")
        self.dim = dim
        self.retries = retries
        self.backoff = backoff
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _post(self, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                response = self._client.post(f"{self.base_url}/embed", json=payload)
                if response.status_code >= 500:
                    last_error = EmbeddingError(
                        f"embed service returned {response.status_code}")
                elif response.status_code != 200:
                    raise EmbeddingError(
                        f"embed service returned {response.status_code}: "
                        f"{response.text[:200]}")
                else:
                    return response.json()
            except httpx.TransportError as exc:
                last_error = exc
            if attempt < self.retries:
                time.sleep(self.backoff * (2 ** attempt))
        raise EmbeddingError(f"embed request failed after {self.retries + 1} "
                             f"attempts: {last_error}")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        data = self._post({"texts": list(texts)})
        vectors = np.asarray(data["vectors"], dtype=np.float32)
        if vectors.shape != (len(texts), self.dim):
            raise EmbeddingError(
                f"embed service returned shape {vectors.shape}, "
                f"expected {(len(texts), self.dim)}")
        return vectors
