"""Embedding backends for the /v1/embed contract.

The default hashes each token into one of `dim` signed buckets and
L2-normalizes: fully deterministic, no weights to download. A
sentence-transformers backend can be selected when the library is installed.
"""
from __future__ import annotations

import hashlib
import math
import re

try:  # optional heavy dependency
    from sentence_transformers import SentenceTransformer
except Exception:  # pragma: no cover - absent in the default install
    SentenceTransformer = None

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*")


class HashedBowEmbedder:
    def __init__(self, dim: int = 384):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    def embed(self, texts: list[str]) -> list[list[float]]:
        out = []
        for text in texts:
            vec = [0.0] * self.dim
            for token in _TOKEN_RE.findall(text.lower()):
                digest = hashlib.sha256(token.encode("utf-8")).digest()
                idx = int.from_bytes(digest[:4], "big") % self.dim
                vec[idx] += 1.0 if digest[4] & 1 == 0 else -1.0
            norm = math.sqrt(sum(v * v for v in vec))
            if norm > 0.0:
                vec = [v / norm for v in vec]
            out.append(vec)
        return out


class SentenceTransformerEmbedder:  # pragma: no cover - needs model weights
    def __init__(self, model_id: str):
        if SentenceTransformer is None:
            raise RuntimeError(
                "sentence-transformers is not installed; use the hashed-bow embedder "
                "or install the real-models extra"
            )
        self._model = SentenceTransformer(model_id)

    def embed(self, texts: list[str]) -> list[list[float]]:
        vectors = self._model.encode(texts, normalize_embeddings=True)
        return [[float(x) for x in vec] for vec in vectors]


def make_embedder(spec: str):
    if spec.startswith("hashed-bow"):
        suffix = spec.rsplit("-", 1)[-1]
        dim = int(suffix) if suffix.isdigit() else 384
        return HashedBowEmbedder(dim)
    if spec.startswith("sentence-transformers/"):
        return SentenceTransformerEmbedder(spec.split("/", 1)[1])
    raise ValueError(f"unknown embedder spec {spec!r}")
