"""Rubric-based automated assessment of long-form lab reports.

A verifier retrieves the sentences most relevant to each rubric dimension
and decides whether the dimension deserves a non-zero score; an ordinal
grader then maps (dimension, report, relevant sentences) to a score in
0..5. Includes evaluation metrics, agreement coefficients, ablations, and
a synthetic corpus for end-to-end testing.
"""

from .config import RunConfig, load_run_config
from .corpus import (
    Corpus,
    DimensionScore,
    Report,
    Rubric,
    RubricDimension,
    Sentence,
    SentenceSelection,
    load_corpus,
    save_corpus,
    segment_sentences,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encoder import (
    DeterministicTestProvider,
    Embedding,
    EncoderHandle,
    deterministic_test_handle,
    encode,
    encode_report,
)
from .errors import (
    ConfigError,
    DimensionMismatchError,
    EmptyDocumentError,
    IncompleteReportError,
    ModeMismatchError,
    RubricAssessError,
    SchemaError,
    UndefinedMetricError,
    UnknownDimensionError,
    ValidationError,
)
from .grader import GraderConfig, ScoreDistribution, ce_loss, grade, oll_loss
from .metrics import (
    EvaluationReport,
    PredictionEntry,
    PredictionSet,
    bootstrap_ci,
    evaluate_predictions,
    krippendorff_alpha_interval,
    masi_alpha,
    metrics_json,
    mse,
    per_dimension_spearman,
    verifier_binary_metrics,
    weighted_accuracy,
)
from .pipeline import (
    AssessedReport,
    assess,
    assess_presence,
    evaluate_checkpoint,
    grid_search,
    run_ablation,
    train_pipeline,
)
from .synth import SynthSettings, generate_synthetic_corpus
from .verifier import (
    VerifierConfig,
    VerifierOutput,
    cosine_similarity,
    relevance_probability,
    verify,
    weighted_bce_loss,
)

__version__ = "0.1.0"

__all__ = [
    "AssessedReport",
    "Checkpoint",
    "ConfigError",
    "Corpus",
    "DeterministicTestProvider",
    "DimensionMismatchError",
    "DimensionScore",
    "Embedding",
    "EmptyDocumentError",
    "EncoderHandle",
    "EvaluationReport",
    "GraderConfig",
    "IncompleteReportError",
    "ModeMismatchError",
    "PredictionEntry",
    "PredictionSet",
    "Report",
    "Rubric",
    "RubricAssessError",
    "RubricDimension",
    "RunConfig",
    "SchemaError",
    "ScoreDistribution",
    "Sentence",
    "SentenceSelection",
    "SynthSettings",
    "UndefinedMetricError",
    "UnknownDimensionError",
    "ValidationError",
    "VerifierConfig",
    "VerifierOutput",
    "assess",
    "assess_presence",
    "bootstrap_ci",
    "ce_loss",
    "cosine_similarity",
    "deterministic_test_handle",
    "encode",
    "encode_report",
    "evaluate_checkpoint",
    "evaluate_predictions",
    "generate_synthetic_corpus",
    "grade",
    "grid_search",
    "krippendorff_alpha_interval",
    "load_checkpoint",
    "load_corpus",
    "load_run_config",
    "masi_alpha",
    "metrics_json",
    "mse",
    "oll_loss",
    "per_dimension_spearman",
    "relevance_probability",
    "run_ablation",
    "save_checkpoint",
    "save_corpus",
    "segment_sentences",
    "train_pipeline",
    "verifier_binary_metrics",
    "verify",
    "weighted_accuracy",
    "weighted_bce_loss",
]
