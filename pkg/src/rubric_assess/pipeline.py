"""End-to-end orchestration: two-stage training, inference assembly with the
verifier gate, the five ablation variants, presence-only assessment, and
grid search over the tuned hyperparameters.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .checkpoint import Checkpoint
from .config import (
    GRID_ALPHAS,
    GRID_BATCH_SIZES,
    GRID_KS,
    GRID_LEARNING_RATES,
    RunConfig,
)
from .corpus import Corpus, Report
from .encoder import (
    DeterministicTestProvider,
    deterministic_test_handle,
    encode,
    encode_report,
    pretrained_handle,
)
from .errors import ConfigError, ModeMismatchError, ValidationError
from .grader import GraderConfig, grade
from .metrics import EvaluationReport, PredictionEntry, PredictionSet, evaluate_predictions
from .training import (
    GraderTrainResult,
    OptimizerConfig,
    VerifierTrainResult,
    train_grader,
    train_verifier,
)
from .verifier import VerifierConfig, verify

logger = logging.getLogger(__name__)

ABLATIONS = (
    "random_verifier",
    "no_verifier_truncate",
    "no_verifier_moving_avg",
    "no_report",
    "ce",
)

RANDOM_SELECTION_SIZE = 3


@dataclass(frozen=True)
class DimensionAssessment:
    dimension_id: str
    score: int
    verifier_probability: float | None
    selected_positions: tuple[int, ...]


@dataclass(frozen=True)
class AssessedReport:
    report_id: str
    per_dimension: tuple[DimensionAssessment, ...]
    total: int

    def __post_init__(self):
        if self.total != sum(d.score for d in self.per_dimension):
            raise ValidationError("total must equal the sum of dimension scores")

    def scores(self) -> dict[str, int]:
        return {d.dimension_id: d.score for d in self.per_dimension}


def _base_handle_pair(config: RunConfig):
    if config.provider == "deterministic_test":
        impl = DeterministicTestProvider(config.embedding_dim, config.max_tokens)
        return (
            deterministic_test_handle("query", impl=impl),
            deterministic_test_handle("passage", impl=impl),
        )
    q = pretrained_handle("query", config.model_name)
    return q, pretrained_handle("passage", config.model_name, impl=q.impl)


def random_selection(seed: int, report: Report, dimension_id: str) -> tuple[int, ...]:
    """Seeded uniform sample of sentence positions, stable across processes."""
    digest = hashlib.blake2b(
        f"{seed}:{report.id}:{dimension_id}".encode("utf-8"), digest_size=8
    ).digest()
    rng = random.Random(int.from_bytes(digest, "big"))
    n = len(report.sentences)
    return tuple(sorted(rng.sample(range(n), min(RANDOM_SELECTION_SIZE, n))))


def _grader_config(config: RunConfig) -> GraderConfig:
    strategy = config.report_strategy
    if config.verifier_mode == "none_truncate":
        strategy = "truncate"
    elif config.verifier_mode == "none_moving_avg":
        strategy = "moving_average"
    return GraderConfig(
        alpha=config.alpha,
        loss=config.loss,
        head=config.head,
        report_strategy=strategy,
    )


def train_pipeline(corpus: Corpus, config: RunConfig) -> Checkpoint:
    """Stage 1 trains the verifier on the non-zero labels; stage 2 trains the
    grader on frozen sentence selections. Ablation variants swap or drop the
    verifier per config.verifier_mode; presence mode stops after stage 1."""
    if corpus.rubric.mode != config.mode:
        raise ModeMismatchError(
            f"corpus is {corpus.rubric.mode} mode but config says {config.mode}"
        )
    opt = OptimizerConfig(
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        epochs=config.epochs,
    )
    verifier_config = VerifierConfig(k=config.k)

    verifier_result: VerifierTrainResult | None = None
    selections: dict[tuple[str, str], tuple[int, ...]] | None = None

    if config.verifier_mode == "learned":
        q_base, s_base = _base_handle_pair(config)
        verifier_result = train_verifier(
            corpus, q_base, s_base, verifier_config, opt, config.seed
        )
        if config.mode == "presence":
            return Checkpoint(
                run_config=config, rubric=corpus.rubric, verifier=verifier_result
            )
        selections = {}
        for report in corpus.reports:
            for dim in corpus.rubric.dimensions:
                out = verify(
                    report, dim, verifier_result.q_handle, verifier_result.s_handle,
                    verifier_config,
                )
                selections[(report.id, dim.id)] = tuple(out.selected_positions)
    elif config.verifier_mode == "random":
        selections = {
            (report.id, dim.id): random_selection(config.seed, report, dim.id)
            for report in corpus.reports
            for dim in corpus.rubric.dimensions
        }
    elif config.mode == "presence":
        raise ConfigError("presence mode requires a learned verifier")

    grader_q, grader_r = _base_handle_pair(config)
    grader_result = train_grader(
        corpus,
        selections,
        grader_q,
        grader_r,
        _grader_config(config),
        opt,
        config.seed,
        include_report=config.include_report,
    )
    return Checkpoint(
        run_config=config,
        rubric=corpus.rubric,
        verifier=verifier_result,
        grader=grader_result,
    )


def _grade_dimension(
    checkpoint: Checkpoint,
    report: Report,
    dimension,
    selected: tuple[int, ...] | None,
) -> int:
    grader: GraderTrainResult = checkpoint.grader
    dim_emb = encode(grader.q_handle, [dimension.query_text])[0]
    report_emb = None
    if grader.include_report:
        report_emb = encode_report(grader.r_handle, report, grader.config.report_strategy)
    rel_emb = None
    if grader.include_rel:
        embs = encode(grader.r_handle, [report.sentences[p].text for p in selected])
        rel_emb = type(embs[0])(np.mean([e.values for e in embs], axis=0))
    dist = grade(grader.heads.head_for(dimension.id), dim_emb, report_emb, rel_emb)
    return dist.argmax_score()


def assess(checkpoint: Checkpoint, report: Report) -> AssessedReport:
    """Score one report on every rubric dimension.

    With a learned verifier, a negative decision pins the score to 0 and the
    grader is never called for that dimension."""
    if checkpoint.run_config.mode != "scored" or checkpoint.grader is None:
        raise ModeMismatchError("checkpoint is not a scored-mode checkpoint")
    config = checkpoint.run_config
    results = []
    for dim in checkpoint.rubric.dimensions:
        probability: float | None = None
        selected: tuple[int, ...] = ()
        if config.verifier_mode == "learned":
            out = verify(
                report, dim, checkpoint.verifier.q_handle,
                checkpoint.verifier.s_handle, checkpoint.verifier.config,
            )
            probability = out.probability
            selected = tuple(out.selected_positions)
            if not out.decision:
                results.append(DimensionAssessment(dim.id, 0, probability, selected))
                continue
        elif config.verifier_mode == "random":
            selected = random_selection(config.seed, report, dim.id)
        score = _grade_dimension(
            checkpoint, report, dim, selected if checkpoint.grader.include_rel else None
        )
        results.append(DimensionAssessment(dim.id, score, probability, selected))
    return AssessedReport(
        report_id=report.id,
        per_dimension=tuple(results),
        total=sum(r.score for r in results),
    )


def assess_presence(checkpoint: Checkpoint, essay: Report) -> list[bool]:
    """Per-dimension verifier decisions for a presence-mode checkpoint."""
    if checkpoint.run_config.mode != "presence":
        raise ModeMismatchError("checkpoint is not a presence-mode checkpoint")
    decisions = []
    for dim in checkpoint.rubric.dimensions:
        out = verify(
            essay, dim, checkpoint.verifier.q_handle,
            checkpoint.verifier.s_handle, checkpoint.verifier.config,
        )
        decisions.append(out.decision)
    return decisions


def evaluate_checkpoint(
    checkpoint: Checkpoint,
    corpus: Corpus,
    split: str = "test",
    bootstrap: tuple[int, int] | None = None,
) -> tuple[EvaluationReport, PredictionSet]:
    """Assess every report in the split and score predictions against the
    corpus ground truth."""
    if checkpoint.rubric != corpus.rubric:
        raise ValidationError("checkpoint rubric does not match the corpus rubric")
    lookup = corpus.score_lookup()
    entries = []
    decisions: dict[tuple[str, str], bool] = {}
    for report in corpus.reports_in_split(split):
        assessed = assess(checkpoint, report)
        for da in assessed.per_dimension:
            key = (report.id, da.dimension_id)
            if key not in lookup:
                raise ValidationError(f"missing ground-truth score for {key}")
            entries.append(
                PredictionEntry(report.id, da.dimension_id, da.score, lookup[key])
            )
            if da.verifier_probability is not None:
                decision = da.verifier_probability > checkpoint.verifier.config.threshold
            else:
                decision = da.score > 0
            decisions[key] = decision
    pred_set = PredictionSet(entries=tuple(entries), rubric=corpus.rubric)
    report = evaluate_predictions(pred_set, decisions=decisions, bootstrap=bootstrap)
    return report, pred_set


def ablation_config(base: RunConfig, variant: str) -> RunConfig:
    """Each variant changes exactly one thing relative to the base config."""
    if variant == "random_verifier":
        return replace(base, verifier_mode="random")
    if variant == "no_verifier_truncate":
        return replace(base, verifier_mode="none_truncate")
    if variant == "no_verifier_moving_avg":
        return replace(base, verifier_mode="none_moving_avg")
    if variant == "no_report":
        return replace(base, include_report=False)
    if variant == "ce":
        return replace(base, loss="ce")
    raise ConfigError(f"unknown ablation {variant!r}; expected one of {ABLATIONS}")


def run_ablation(
    corpus: Corpus, base_config: RunConfig, variant: str, split: str = "test"
) -> tuple[EvaluationReport, Checkpoint]:
    config = ablation_config(base_config, variant)
    checkpoint = train_pipeline(corpus, config)
    report, _ = evaluate_checkpoint(checkpoint, corpus, split)
    return report, checkpoint


# ---------------------------------------------------------------------------
# grid search


@dataclass(frozen=True)
class GridCell:
    config: RunConfig
    val_loss: float
    diverged: bool
    metrics: dict | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "val_loss": self.val_loss,
            "diverged": self.diverged,
            "metrics": self.metrics,
        }


@dataclass(frozen=True)
class GridResult:
    best: RunConfig
    leaderboard: tuple[GridCell, ...]


def best_val_loss(checkpoint: Checkpoint) -> float:
    """Model-selection value for one trained pipeline: the minimum epoch
    validation loss of its last trained stage."""
    stage = checkpoint.grader if checkpoint.grader is not None else checkpoint.verifier
    return min(e.val_loss for e in stage.log)


def _default_cell(corpus: Corpus, config: RunConfig) -> tuple[float, dict | None]:
    return best_val_loss(train_pipeline(corpus, config)), None


def _check_grid_values(name: str, values: Sequence, allowed: Sequence):
    if not values:
        raise ConfigError(f"grid for {name} is empty")
    bad = [v for v in values if v not in allowed]
    if bad:
        raise ConfigError(f"grid values for {name} outside the search set: {bad}")


def grid_search(
    corpus: Corpus,
    base_config: RunConfig,
    learning_rates: Sequence[float] = GRID_LEARNING_RATES,
    batch_sizes: Sequence[int] = GRID_BATCH_SIZES,
    alphas: Sequence[float] = GRID_ALPHAS,
    ks: Sequence[int] = GRID_KS,
    train_fn: Callable[[Corpus, RunConfig], tuple[float, dict | None]] | None = None,
    leaderboard_path: str | Path | None = None,
) -> GridResult:
    """Enumerate cells lazily in a fixed order, pick the lowest validation
    loss; non-finite losses are flagged and never win; ties keep the earlier
    cell."""
    _check_grid_values("learning_rate", learning_rates, GRID_LEARNING_RATES)
    _check_grid_values("batch_size", batch_sizes, GRID_BATCH_SIZES)
    _check_grid_values("alpha", alphas, GRID_ALPHAS)
    _check_grid_values("k", ks, GRID_KS)
    train_fn = train_fn or _default_cell

    cells_iter = itertools.product(learning_rates, batch_sizes, alphas, ks)
    best_cell: GridCell | None = None
    leaderboard: list[GridCell] = []
    writer = None
    if leaderboard_path is not None:
        writer = open(leaderboard_path, "w", encoding="utf-8")
    try:
        for lr, bs, alpha, k in cells_iter:
            config = replace(
                base_config, learning_rate=lr, batch_size=bs, alpha=alpha, k=k
            )
            val_loss, cell_metrics = train_fn(corpus, config)
            diverged = not np.isfinite(val_loss)
            if diverged:
                logger.warning("grid cell diverged: lr=%s bs=%s alpha=%s k=%s", lr, bs, alpha, k)
            cell = GridCell(config, float(val_loss), diverged, cell_metrics)
            leaderboard.append(cell)
            if writer is not None:
                writer.write(json.dumps(cell.to_dict(), sort_keys=True) + "\n")
            if not diverged and (best_cell is None or val_loss < best_cell.val_loss):
                best_cell = cell
    finally:
        if writer is not None:
            writer.close()
    if best_cell is None:
        raise ConfigError("every grid cell diverged")
    return GridResult(best=best_cell.config, leaderboard=tuple(leaderboard))
