"""Text-embedding providers and similarity math.

Two modes. `deterministic_test` hashes each token into one of `dim` signed
buckets (feature hashing over a bag of words) and L2-normalizes: a pure,
endpoint-free function of the text, so construction and federation tests are
seed-free and reproducible byte-for-byte. `http_endpoint` talks to a standard
embeddings JSON API and is what production runs point at a real sentence
encoder.
"""
from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass

import numpy as np
import requests

from .errors import EndpointError, GraphError
from .textutil import tokenize

DEFAULT_DIM = 384


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int = DEFAULT_DIM

    def __post_init__(self):
        if len(self.values) != self.dim:
            raise GraphError(f"embedding has {len(self.values)} entries, declared dim {self.dim}")
        if not all(math.isfinite(v) for v in self.values):
            raise GraphError("embedding entries must be finite")

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))


@dataclass
class EmbedProviderConfig:
    mode: str = "deterministic_test"  # or "http_endpoint"
    endpoint_url: str | None = None
    dim: int = DEFAULT_DIM
    normalize: bool = True
    timeout: float = 30.0
    max_in_flight: int = 4

    def __post_init__(self):
        if self.mode not in ("deterministic_test", "http_endpoint"):
            raise GraphError(f"unknown embed provider mode {self.mode!r}")
        if self.mode == "http_endpoint" and not self.endpoint_url:
            raise GraphError("http_endpoint mode requires endpoint_url")


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Standard cosine similarity in [-1, 1]; identical nonzero vectors give 1.0."""
    if u.dim != v.dim:
        raise GraphError(f"cosine dim mismatch: {u.dim} vs {v.dim}")
    nu, nv = u.norm(), v.norm()
    if nu == 0.0 or nv == 0.0:
        raise GraphError("cosine undefined for zero vector")
    dot = sum(a * b for a, b in zip(u.values, v.values))
    return max(-1.0, min(1.0, dot / (nu * nv)))


def _hashed_bow(text: str, dim: int, normalize: bool) -> tuple[float, ...]:
    vec = np.zeros(dim, dtype=np.float64)
    for token in tokenize(text):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        idx = int.from_bytes(digest[:4], "big") % dim
        sign = 1.0 if digest[4] & 1 == 0 else -1.0
        vec[idx] += sign
    if normalize:
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
    return tuple(float(v) for v in vec)


class EmbeddingProvider:
    """Order-preserving batch embedder with an in-memory per-run memo.

    The memo is keyed on the raw text, so a text's vector never depends on
    which batch it arrived in.
    """

    def __init__(self, config: EmbedProviderConfig | None = None):
        self.config = config or EmbedProviderConfig()
        self._memo: dict[str, EmbeddingVector] = {}
        self._gate = threading.Semaphore(self.config.max_in_flight)
        self._session_dim: int | None = None

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise GraphError("embed requires at least one text")
        missing = [t for t in texts if t not in self._memo]
        if missing:
            if self.config.mode == "deterministic_test":
                for t in missing:
                    self._memo[t] = EmbeddingVector(
                        _hashed_bow(t, self.config.dim, self.config.normalize), self.config.dim
                    )
            else:
                # Dedupe before the wire call; response order matches request order.
                unique = list(dict.fromkeys(missing))
                for text, vec in zip(unique, self._embed_http(unique)):
                    self._memo[text] = vec
        return [self._memo[t] for t in texts]

    def embed_one(self, text: str) -> EmbeddingVector:
        return self.embed([text])[0]

    def _embed_http(self, texts: list[str]) -> list[EmbeddingVector]:
        url = self.config.endpoint_url.rstrip("/") + "/v1/embed"
        with self._gate:
            try:
                resp = requests.post(url, json={"texts": texts}, timeout=self.config.timeout)
            except requests.RequestException as exc:
                raise EndpointError(f"embed endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise EndpointError(f"embed endpoint returned {resp.status_code}: {resp.text[:200]}")
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise EndpointError(f"embed endpoint returned malformed body: {exc}") from exc
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise EndpointError(f"embed endpoint returned {len(vectors)} vectors for {len(texts)} texts")
        out = []
        for vec in vectors:
            values = tuple(float(x) for x in vec)
            if self.config.normalize:
                norm = math.sqrt(sum(v * v for v in values))
                if norm > 0.0:
                    values = tuple(v / norm for v in values)
            out.append(EmbeddingVector(values, len(values)))
        if len({v.dim for v in out}) > 1:
            raise EndpointError("embed endpoint returned vectors of mixed dimension")
        if out:
            if self._session_dim is None:
                self._session_dim = out[0].dim
            elif out[0].dim != self._session_dim:
                raise EndpointError(
                    f"embed endpoint changed dimension mid-session: {out[0].dim} != {self._session_dim}"
                )
        return out


def node_embedding(provider: EmbeddingProvider, graph, node_id: str) -> EmbeddingVector:
    """Embedding of a node's content, memoized onto the node itself."""
    node = graph.nodes[node_id]
    if node.embedding is not None:
        return EmbeddingVector(tuple(node.embedding), len(node.embedding))
    vec = provider.embed_one(node.content)
    node.embedding = list(vec.values)
    return vec


def content_similarity(provider: EmbeddingProvider, graph, u: str, v: str) -> float:
    """Cosine of two nodes' contents; token-free content never matches anything."""
    eu = node_embedding(provider, graph, u)
    ev = node_embedding(provider, graph, v)
    if eu.norm() == 0.0 or ev.norm() == 0.0:
        return -1.0
    return cosine(eu, ev)
