"""Sentence-relevance verifier: rank report sentences against a rubric
dimension by cosine similarity, average the top-k, squash to a probability,
and decide whether the dimension merits a non-zero score.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Report, RubricDimension
from .encoder import Embedding, EncoderHandle, encode
from .errors import ConfigError, DimensionMismatchError, ValidationError

logger = logging.getLogger(__name__)

# Logistic squash constants are part of the formula, not hyperparameters.
SIGMOID_SCALE = 10.0
SIGMOID_CENTER = 0.5

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class SimilarityScore:
    sentence_position: int
    value: float

    def __post_init__(self):
        if abs(self.value) > 1 + 1e-9:
            raise ValidationError(f"similarity {self.value} outside [-1, 1]")


@dataclass(frozen=True)
class VerifierConfig:
    k: int = 3
    threshold: float = 0.5
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")


@dataclass(frozen=True)
class VerifierOutput:
    probability: float
    top_k: tuple[SimilarityScore, ...]
    decision: bool

    def __post_init__(self):
        if not 0 < self.probability < 1:
            raise ValidationError("probability must lie in (0, 1)")
        values = [s.value for s in self.top_k]
        if values != sorted(values, reverse=True):
            raise ValidationError("top_k must be sorted by descending value")

    @property
    def selected_positions(self) -> list[int]:
        return [s.sentence_position for s in self.top_k]


def cosine_similarity(q_emb: Embedding, s_emb: Embedding, epsilon: float = 1e-8) -> float:
    if q_emb.dim != s_emb.dim:
        raise DimensionMismatchError(
            f"embedding dims differ: {q_emb.dim} vs {s_emb.dim}"
        )
    q = q_emb.values
    s = s_emb.values
    denom = max(float(np.linalg.norm(q) * np.linalg.norm(s)), epsilon)
    return float(q @ s) / denom


def rank_sentences(
    query_emb: Embedding, sentence_embs: list[Embedding], epsilon: float
) -> list[SimilarityScore]:
    """All sentence similarities, descending, ties by ascending position."""
    scores = [
        SimilarityScore(pos, cosine_similarity(query_emb, emb, epsilon))
        for pos, emb in enumerate(sentence_embs)
    ]
    scores.sort(key=lambda s: (-s.value, s.sentence_position))
    return scores


def select_top_k(
    report: Report,
    dimension: RubricDimension,
    q_handle: EncoderHandle,
    s_handle: EncoderHandle,
    config: VerifierConfig,
) -> list[SimilarityScore]:
    query_emb = encode(q_handle, [dimension.query_text])[0]
    sentence_embs = encode(s_handle, [s.text for s in report.sentences])
    ranked = rank_sentences(query_emb, sentence_embs, config.epsilon)
    return ranked[: min(config.k, len(ranked))]


def relevance_probability(top_k: list[SimilarityScore], config: VerifierConfig) -> float:
    if not top_k:
        raise ValidationError("relevance_probability needs at least one similarity")
    d = sum(s.value for s in top_k) / len(top_k)
    return probability_from_evidence(d)


def probability_from_evidence(d: float) -> float:
    return 1.0 / (1.0 + math.exp(-SIGMOID_SCALE * (d - SIGMOID_CENTER)))


def output_from_top_k(top_k: list[SimilarityScore], config: VerifierConfig) -> VerifierOutput:
    p = relevance_probability(top_k, config)
    return VerifierOutput(probability=p, top_k=tuple(top_k), decision=p > config.threshold)


def verify(
    report: Report,
    dimension: RubricDimension,
    q_handle: EncoderHandle,
    s_handle: EncoderHandle,
    config: VerifierConfig,
) -> VerifierOutput:
    top_k = select_top_k(report, dimension, q_handle, s_handle, config)
    return output_from_top_k(top_k, config)


def clamp_probability(p: float) -> float:
    return min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)


def weighted_bce_loss(probability: float, label: int, positive_weight: float = 1.0) -> float:
    """Binary cross-entropy with the positive term scaled by positive_weight."""
    if label not in (0, 1):
        raise ValidationError(f"label must be 0 or 1, got {label!r}")
    if positive_weight <= 0:
        raise ValidationError("positive_weight must be positive")
    p = clamp_probability(probability)
    return -(positive_weight * label * math.log(p) + (1 - label) * math.log(1.0 - p))


def weighted_bce_grad(probability: float, label: int, positive_weight: float = 1.0) -> float:
    """d loss / d probability, matching weighted_bce_loss away from the clamp."""
    p = clamp_probability(probability)
    return -(positive_weight * label / p) + (1 - label) / (1.0 - p)


def positive_weights(corpus: Corpus, floor: float = 1e-3, cap: float = 1e3) -> dict[str, float]:
    """Per-dimension N_neg/N_pos over the train split; degenerate dims get 1."""
    weights: dict[str, float] = {}
    train_ids = {r.id for r in corpus.reports_in_split("train")}
    for dim in corpus.rubric.dimensions:
        n_pos = 0
        n_neg = 0
        for score in corpus.scores:
            if score.dimension_id != dim.id or score.report_id not in train_ids:
                continue
            if score.score > 0:
                n_pos += 1
            else:
                n_neg += 1
        if n_pos == 0 or n_neg == 0:
            logger.warning(
                "dimension %s has no %s train examples; using weight 1",
                dim.id,
                "positive" if n_pos == 0 else "negative",
            )
            weights[dim.id] = 1.0
        else:
            weights[dim.id] = min(max(n_neg / n_pos, floor), cap)
    return weights
