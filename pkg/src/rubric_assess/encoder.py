"""Pluggable text-embedding providers and the dual-encoder handle contract.

Two providers exist: a deterministic hash-based test encoder (no downloads,
meaningful keyword-overlap similarity, unit-norm outputs) and a wrapper for
pretrained contextual sentence encoders. Handles can carry a trained linear
projection; encoding applies the base provider and then the projection, so
inference stays pure numpy.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .corpus import Report
from .errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)

SIDES = ("query", "passage")
REPORT_STRATEGIES = ("truncate", "moving_average")

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError(f"embedding must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("embedding contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


class DeterministicTestProvider:
    """Token-hash bag-of-vectors encoder: each token maps to a fixed unit
    vector seeded from its hash; a text embeds as the L2-normalized sum over
    its first ``max_tokens`` tokens."""

    name = "deterministic_test"

    def __init__(self, embedding_dim: int = 64, max_tokens: int = 128):
        if embedding_dim <= 0 or max_tokens <= 0:
            raise ConfigError("embedding_dim and max_tokens must be positive")
        self.embedding_dim = embedding_dim
        self.max_tokens = max_tokens
        self.truncated_count = 0
        self._token_cache: dict[str, np.ndarray] = {}

    @property
    def params_version(self) -> str:
        return f"deterministic-test:d{self.embedding_dim}:t{self.max_tokens}:v1"

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "big"))
            vec = rng.standard_normal(self.embedding_dim)
            vec /= np.linalg.norm(vec)
            self._token_cache[token] = vec
        return vec

    def embed_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            raise ValidationError("cannot embed an empty token sequence")
        acc = np.zeros(self.embedding_dim)
        for t in tokens:
            acc += self._token_vector(t)
        norm = np.linalg.norm(acc)
        if norm < 1e-12:
            return self._token_vector("".join(tokens))
        return acc / norm

    def encode_text(self, text: str) -> np.ndarray:
        tokens = tokenize(text) or [text]
        if len(tokens) > self.max_tokens:
            self.truncated_count += 1
            logger.debug("truncating input of %d tokens to %d", len(tokens), self.max_tokens)
            tokens = tokens[: self.max_tokens]
        return self.embed_tokens(tokens)


class PretrainedContextualProvider:
    """Sentence-transformer wrapper. Requires the ``pretrained`` extra and
    access to model weights; not used by the test suite."""

    name = "pretrained_contextual"

    def __init__(self, model_name: str = "sentence-transformers/all-MiniLM-L6-v2"):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as e:
            raise ConfigError(
                "the pretrained_contextual provider needs sentence-transformers "
                "(install the 'pretrained' extra)"
            ) from e
        self.model_name = model_name
        self._model = SentenceTransformer(model_name)
        self.embedding_dim = int(self._model.get_sentence_embedding_dimension())
        self.max_tokens = int(getattr(self._model, "max_seq_length", 256))
        self.truncated_count = 0

    @property
    def params_version(self) -> str:
        return f"pretrained:{self.model_name}"

    def embed_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        return self.encode_text(" ".join(tokens))

    def encode_text(self, text: str) -> np.ndarray:
        vec = self._model.encode([text], convert_to_numpy=True)[0]
        return np.asarray(vec, dtype=np.float64)


@dataclass(frozen=True)
class EncoderHandle:
    """One side of a dual encoder: a base provider plus an optional trained
    projection. Equal ``params_version`` implies identical outputs."""

    provider: str
    side: str
    embedding_dim: int
    params_version: str
    impl: object = field(repr=False, compare=False)
    projection: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.side not in SIDES:
            raise ConfigError(f"side must be one of {SIDES}, got {self.side!r}")


def deterministic_test_handle(
    side: str,
    embedding_dim: int = 64,
    max_tokens: int = 128,
    impl: DeterministicTestProvider | None = None,
) -> EncoderHandle:
    impl = impl or DeterministicTestProvider(embedding_dim, max_tokens)
    return EncoderHandle(
        provider=impl.name,
        side=side,
        embedding_dim=impl.embedding_dim,
        params_version=impl.params_version,
        impl=impl,
    )


def pretrained_handle(
    side: str,
    model_name: str = "sentence-transformers/all-MiniLM-L6-v2",
    impl: PretrainedContextualProvider | None = None,
) -> EncoderHandle:
    impl = impl or PretrainedContextualProvider(model_name)
    return EncoderHandle(
        provider=impl.name,
        side=side,
        embedding_dim=impl.embedding_dim,
        params_version=impl.params_version,
        impl=impl,
    )


def with_projection(handle: EncoderHandle, matrix: np.ndarray) -> EncoderHandle:
    """Return a handle that applies ``matrix`` after the base encoder."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (handle.embedding_dim, handle.embedding_dim):
        raise ConfigError(
            f"projection must be {handle.embedding_dim}x{handle.embedding_dim}, "
            f"got {matrix.shape}"
        )
    tag = hashlib.sha256(matrix.tobytes()).hexdigest()[:16]
    return replace(
        handle,
        projection=matrix,
        params_version=f"{handle.params_version}+proj:{tag}",
    )


def _finish(handle: EncoderHandle, vec: np.ndarray) -> Embedding:
    if handle.projection is not None:
        vec = handle.projection @ vec
    return Embedding(vec)


def encode(handle: EncoderHandle, texts: Sequence[str]) -> list[Embedding]:
    """Embed each text; output order matches input order."""
    if not texts:
        raise ValidationError("encode requires at least one text")
    for t in texts:
        if not t:
            raise ValidationError("encode received an empty text")
    return [_finish(handle, handle.impl.encode_text(t)) for t in texts]


def encode_report(
    handle: EncoderHandle,
    report: Report,
    strategy: str,
    window: int | None = None,
    stride: int | None = None,
) -> Embedding:
    """Embed a whole report, either by truncating to the provider budget or by
    averaging embeddings of fixed-size, fixed-stride token windows covering
    the full text (windows default to disjoint budget-sized tiles)."""
    impl = handle.impl
    tokens = tokenize(report.raw_text) or [report.raw_text]
    if strategy == "truncate":
        if len(tokens) > impl.max_tokens:
            impl.truncated_count += 1
            tokens = tokens[: impl.max_tokens]
        return _finish(handle, impl.embed_tokens(tokens))
    if strategy == "moving_average":
        w = window or impl.max_tokens
        s = stride or w
        if w <= 0 or s <= 0:
            raise ConfigError("window and stride must be positive")
        chunks = [tokens[i : i + w] for i in range(0, len(tokens), s)]
        chunks = [c for c in chunks if c]
        vecs = np.stack([impl.embed_tokens(c) for c in chunks])
        return _finish(handle, vecs.mean(axis=0))
    raise ConfigError(f"unknown report strategy {strategy!r}")
