"""Ordinal grader: map (dimension, report, relevant-sentences) embeddings
through a linear head to a distribution over the six score classes.

Losses live here too: ordinal log loss (distance-weighted, exponent alpha)
and plain cross-entropy for the ablation. Both have probs-level variants so
gradient checks can perturb raw vectors without tripping distribution
validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatchError,
    UnknownDimensionError,
    ValidationError,
)

CLASSES = (0, 1, 2, 3, 4, 5)
N_CLASSES = len(CLASSES)
LOG_CLAMP = 1e-7

LOSSES = ("oll", "ce")
HEADS = ("shared", "per_dimension")
REL_AGGREGATIONS = ("mean", "concat_text")


@dataclass(frozen=True, eq=False)
class ScoreDistribution:
    probs: np.ndarray
    classes: tuple[int, ...] = CLASSES

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.shape != (N_CLASSES,):
            raise ValidationError(f"probs must have shape ({N_CLASSES},), got {arr.shape}")
        if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
            raise ValidationError("probabilities must lie in [0, 1]")
        if abs(float(arr.sum()) - 1.0) > 1e-6:
            raise ValidationError(f"probabilities sum to {arr.sum()}, not 1")
        object.__setattr__(self, "probs", arr)

    def argmax_score(self) -> int:
        # np.argmax returns the first maximum, so ties resolve to the lower score.
        return int(np.argmax(self.probs))


@dataclass(frozen=True)
class GraderConfig:
    alpha: float = 1.5
    loss: str = "oll"
    head: str = "shared"
    report_strategy: str = "truncate"
    rel_aggregation: str = "mean"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.report_strategy not in ("truncate", "moving_average"):
            raise ConfigError(f"unknown report_strategy {self.report_strategy!r}")
        if self.rel_aggregation not in REL_AGGREGATIONS:
            raise ConfigError(f"unknown rel_aggregation {self.rel_aggregation!r}")


@dataclass(frozen=True, eq=False)
class GraderHead:
    """Linear prediction layer: logits = weight @ x + bias."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != N_CLASSES:
            raise ValidationError(f"weight must be ({N_CLASSES}, in_dim), got {w.shape}")
        if b.shape != (N_CLASSES,):
            raise ValidationError(f"bias must have shape ({N_CLASSES},), got {b.shape}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return int(self.weight.shape[1])


def zero_head(in_dim: int) -> GraderHead:
    return GraderHead(np.zeros((N_CLASSES, in_dim)), np.zeros(N_CLASSES))


@dataclass(frozen=True)
class GraderHeads:
    """Either one shared head or one per rubric dimension."""

    mode: str
    shared: GraderHead | None = None
    per_dimension: dict[str, GraderHead] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in HEADS:
            raise ConfigError(f"head mode must be one of {HEADS}")
        if self.mode == "shared" and self.shared is None:
            raise ConfigError("shared mode requires a shared head")
        if self.mode == "per_dimension" and not self.per_dimension:
            raise ConfigError("per_dimension mode requires at least one head")

    def head_for(self, dimension_id: str) -> GraderHead:
        if self.mode == "shared":
            return self.shared
        try:
            return self.per_dimension[dimension_id]
        except KeyError:
            raise UnknownDimensionError(
                f"no grader head for dimension {dimension_id!r}"
            ) from None


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exps = np.exp(shifted)
    return exps / exps.sum()


def concat_inputs(parts) -> np.ndarray:
    """Concatenate the non-None embeddings in their given (fixed) order."""
    vecs = [p.values for p in parts if p is not None]
    if not vecs:
        raise ValidationError("grader needs at least one input embedding")
    dims = {v.shape[0] for v in vecs}
    if len(dims) > 1:
        raise DimensionMismatchError(f"grader input dims differ: {sorted(dims)}")
    return np.concatenate(vecs)


def grade(head: GraderHead, dim_emb, report_emb, rel_emb) -> ScoreDistribution:
    """Distribution over score classes for one (dimension, report) pair.

    Input order is fixed: dimension, report, relevant sentences. Ablations
    pass None for the slot they drop.
    """
    x = concat_inputs([dim_emb, report_emb, rel_emb])
    if x.shape[0] != head.in_dim:
        raise DimensionMismatchError(
            f"head expects input dim {head.in_dim}, got {x.shape[0]}"
        )
    return ScoreDistribution(softmax(head.weight @ x + head.bias))


def _check_label(y: int):
    if not isinstance(y, int) or isinstance(y, bool) or not 0 <= y < N_CLASSES:
        raise ValidationError(f"label must be an integer in [0, {N_CLASSES - 1}], got {y!r}")


def oll_loss_from_probs(probs: np.ndarray, y: int, alpha: float) -> float:
    _check_label(y)
    if alpha <= 0:
        raise ValidationError("alpha must be positive")
    total = 0.0
    for i, p in enumerate(np.asarray(probs, dtype=np.float64)):
        dist = abs(y - i)
        if dist == 0:
            continue
        p = min(float(p), 1.0 - LOG_CLAMP)
        total -= math.log(1.0 - p) * dist**alpha
    return total


def oll_grad_from_probs(probs: np.ndarray, y: int, alpha: float) -> np.ndarray:
    """d loss / d p_i = |y - i|^alpha / (1 - p_i); zero at i = y."""
    probs = np.asarray(probs, dtype=np.float64)
    grad = np.zeros_like(probs)
    for i, p in enumerate(probs):
        dist = abs(y - i)
        if dist == 0:
            continue
        p = min(float(p), 1.0 - LOG_CLAMP)
        grad[i] = dist**alpha / (1.0 - p)
    return grad


def oll_loss(dist: ScoreDistribution, y: int, alpha: float) -> float:
    return oll_loss_from_probs(dist.probs, y, alpha)


def ce_loss_from_probs(probs: np.ndarray, y: int) -> float:
    _check_label(y)
    p = float(np.asarray(probs, dtype=np.float64)[y])
    p = min(max(p, LOG_CLAMP), 1.0 - LOG_CLAMP)
    return -math.log(p)


def ce_grad_from_probs(probs: np.ndarray, y: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    grad = np.zeros_like(probs)
    p = min(max(float(probs[y]), LOG_CLAMP), 1.0 - LOG_CLAMP)
    grad[y] = -1.0 / p
    return grad


def ce_loss(dist: ScoreDistribution, y: int) -> float:
    return ce_loss_from_probs(dist.probs, y)
