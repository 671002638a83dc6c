"""Evaluation and agreement metrics.

Includes score-error metrics (MSE, distance-weighted accuracy), a generic
Krippendorff alpha engine with interval and MASI set distances, per-report
Spearman over dimension vectors, binary verifier metrics with a majority
baseline, and a percentile bootstrap for confidence intervals.
"""

from __future__ import annotations

import csv
import json
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .corpus import Rubric, SentenceSelection
from .errors import (
    ConfigError,
    IncompleteReportError,
    UndefinedMetricError,
    ValidationError,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# prediction containers


@dataclass(frozen=True)
class PredictionEntry:
    report_id: str
    dimension_id: str
    predicted: int
    truth: int


@dataclass(frozen=True)
class PredictionSet:
    entries: tuple[PredictionEntry, ...]
    rubric: Rubric

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            key = (e.report_id, e.dimension_id)
            if key in seen:
                raise ValidationError(f"duplicate prediction for {key}")
            seen.add(key)
            dim = self.rubric.dimension(e.dimension_id)
            for label, value in (("predicted", e.predicted), ("truth", e.truth)):
                if not 0 <= value <= dim.max_score:
                    raise ValidationError(
                        f"{label} score {value} outside [0, {dim.max_score}] "
                        f"for {key}"
                    )

    def report_ids(self) -> list[str]:
        out = []
        for e in self.entries:
            if e.report_id not in out:
                out.append(e.report_id)
        return out

    def by_report(self) -> dict[str, dict[str, PredictionEntry]]:
        grouped: dict[str, dict[str, PredictionEntry]] = {}
        for e in self.entries:
            grouped.setdefault(e.report_id, {})[e.dimension_id] = e
        return grouped


def total_score(scores: Mapping[str, int], rubric: Rubric) -> int:
    """Sum of per-dimension scores; every rubric dimension must be present."""
    missing = [d.id for d in rubric.dimensions if d.id not in scores]
    if missing:
        raise IncompleteReportError(f"missing dimensions: {missing}")
    return sum(int(scores[d.id]) for d in rubric.dimensions)


def totals(pred_set: PredictionSet) -> tuple[list[int], list[int], list[str]]:
    """Per-report (predicted total, truth total), in first-seen report order."""
    grouped = pred_set.by_report()
    pred_totals, truth_totals, ids = [], [], []
    for rid in pred_set.report_ids():
        entries = grouped[rid]
        pred_totals.append(
            total_score({d: e.predicted for d, e in entries.items()}, pred_set.rubric)
        )
        truth_totals.append(
            total_score({d: e.truth for d, e in entries.items()}, pred_set.rubric)
        )
        ids.append(rid)
    return pred_totals, truth_totals, ids


# ---------------------------------------------------------------------------
# score-error metrics


def mse(preds: Sequence[float], truths: Sequence[float]) -> float:
    if len(preds) != len(truths):
        raise ValidationError(f"length mismatch: {len(preds)} vs {len(truths)}")
    if not preds:
        raise ValidationError("mse needs at least one pair")
    return float(np.mean([(p - t) ** 2 for p, t in zip(preds, truths)]))


def weighted_accuracy(
    preds: Sequence[float],
    truths: Sequence[float],
    max_distance: float,
    literal: bool = False,
) -> float:
    """Mean of 1 - |g - y| / max_distance.

    The literal flag switches to (1 - |g - y|) / max_distance, the formula
    exactly as typeset; it cannot reach 1 even on perfect predictions and
    exists only for comparison.
    """
    if max_distance <= 0:
        raise ValidationError("max_distance must be positive")
    if len(preds) != len(truths):
        raise ValidationError(f"length mismatch: {len(preds)} vs {len(truths)}")
    if not preds:
        raise ValidationError("weighted_accuracy needs at least one pair")
    terms = []
    for p, t in zip(preds, truths):
        dist = abs(p - t)
        if dist > max_distance:
            raise ValidationError(f"|{p} - {t}| exceeds max_distance {max_distance}")
        if literal:
            terms.append((1.0 - dist) / max_distance)
        else:
            terms.append(1.0 - dist / max_distance)
    return float(np.mean(terms))


# ---------------------------------------------------------------------------
# Krippendorff alpha (generic engine, pluggable distance)


def krippendorff_alpha(
    units: Iterable[Sequence[Hashable]],
    distance: Callable[[Hashable, Hashable], float],
) -> float:
    """1 - D_o/D_e over units of co-present ratings, any squared distance.

    Uses a coincidence matrix over unique values; units with fewer than two
    ratings are unpairable and ignored. Zero expected disagreement returns
    1.0 by convention.
    """
    pairable = [list(u) for u in units if len(u) >= 2]
    if not pairable:
        raise UndefinedMetricError("no unit has two or more ratings")

    values: list[Hashable] = []
    index: dict[Hashable, int] = {}
    for unit in pairable:
        for v in unit:
            if v not in index:
                index[v] = len(values)
                values.append(v)
    m = len(values)

    coincidence = np.zeros((m, m))
    n_total = 0
    for unit in pairable:
        m_u = len(unit)
        n_total += m_u
        w = 1.0 / (m_u - 1)
        for i, a in enumerate(unit):
            for j, b in enumerate(unit):
                if i != j:
                    coincidence[index[a], index[b]] += w

    dist = np.zeros((m, m))
    for a in range(m):
        for b in range(m):
            dist[a, b] = distance(values[a], values[b])

    n_v = coincidence.sum(axis=1)
    d_obs = float((coincidence * dist).sum()) / n_total
    d_exp = float((np.outer(n_v, n_v) * dist).sum()) / (n_total * (n_total - 1))
    if d_exp == 0.0:
        return 1.0
    return 1.0 - d_obs / d_exp


def interval_distance(a: float, b: float) -> float:
    return (a - b) ** 2


def krippendorff_alpha_interval(ratings: Sequence[Sequence[float | None]]) -> float:
    """Alpha with squared-difference distance over a raters x items matrix;
    None marks a missing rating."""
    if len(ratings) < 2:
        raise UndefinedMetricError("interval alpha needs at least two raters")
    n_items = {len(row) for row in ratings}
    if len(n_items) != 1:
        raise ValidationError("all rater rows must cover the same items")
    units = []
    for item in range(n_items.pop()):
        unit = [row[item] for row in ratings if row[item] is not None]
        units.append(unit)
    return krippendorff_alpha(units, interval_distance)


def masi_distance(a: frozenset, b: frozenset) -> float:
    """1 - Jaccard x monotonicity; two empty sets count as identical."""
    a, b = frozenset(a), frozenset(b)
    if a == b:
        return 0.0
    inter = len(a & b)
    union = len(a | b)
    jaccard = inter / union
    if inter == 0:
        mono = 0.0
    elif a < b or b < a:
        mono = 2.0 / 3.0
    else:
        mono = 1.0 / 3.0
    return 1.0 - jaccard * mono


def masi_alpha(selections: Iterable[SentenceSelection]) -> float:
    """Agreement over sentence-selection sets, items = (report, dimension)."""
    raters = set()
    by_item: dict[tuple[str, str], list[frozenset]] = {}
    for sel in selections:
        raters.add(sel.rater_id)
        by_item.setdefault((sel.report_id, sel.dimension_id), []).append(
            frozenset(sel.positions)
        )
    if len(raters) < 2:
        raise UndefinedMetricError("masi alpha needs at least two raters")
    units = [by_item[key] for key in sorted(by_item)]
    return krippendorff_alpha(units, masi_distance)


# ---------------------------------------------------------------------------
# per-report Spearman over dimension vectors


def _is_constant(vec: Sequence[float]) -> bool:
    return len(set(vec)) <= 1


def per_dimension_spearman(
    preds_by_report: Mapping[str, Sequence[float]],
    truths_by_report: Mapping[str, Sequence[float]],
) -> tuple[float, float]:
    """Spearman rho per report across its dimension vector, then (mean, sd).

    Reports where either vector is constant (rho undefined) are skipped with
    a warning; sd uses the population convention.
    """
    if set(preds_by_report) != set(truths_by_report):
        raise ValidationError("prediction and truth report ids differ")
    rhos = []
    skipped = 0
    for rid in preds_by_report:
        p = list(preds_by_report[rid])
        t = list(truths_by_report[rid])
        if len(p) != len(t):
            raise ValidationError(f"report {rid}: vector lengths differ")
        if len(p) < 2 or _is_constant(p) or _is_constant(t):
            skipped += 1
            continue
        rhos.append(float(stats.spearmanr(p, t).statistic))
    if skipped:
        logger.warning("spearman skipped %d report(s) with constant vectors", skipped)
    if not rhos:
        raise UndefinedMetricError("rho undefined for every report")
    return float(np.mean(rhos)), float(np.std(rhos))


# ---------------------------------------------------------------------------
# verifier binary metrics


@dataclass(frozen=True)
class BinaryMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int


def verifier_binary_metrics(
    decisions: Sequence[bool], labels: Sequence[bool]
) -> BinaryMetrics:
    """Micro-averaged over all pairs; positive class = non-zero score."""
    if len(decisions) != len(labels):
        raise ValidationError("decisions and labels differ in length")
    if not decisions:
        raise ValidationError("verifier metrics need at least one pair")
    tp = fp = fn = tn = 0
    for d, y in zip(decisions, labels):
        if d and y:
            tp += 1
        elif d and not y:
            fp += 1
        elif not d and y:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    accuracy = (tp + tn) / len(decisions)
    return BinaryMetrics(accuracy, precision, recall, f1, tp, fp, fn, tn)


def majority_baseline(labels: Sequence[bool]) -> BinaryMetrics:
    """Metrics for always predicting the more frequent label (ties favor
    the positive class)."""
    if not labels:
        raise ValidationError("majority baseline needs at least one label")
    n_pos = sum(1 for y in labels if y)
    majority = n_pos >= len(labels) - n_pos
    return verifier_binary_metrics([majority] * len(labels), labels)


# ---------------------------------------------------------------------------
# bootstrap


def bootstrap_ci(
    metric_fn: Callable[[list], float],
    data: Sequence,
    n_resamples: int,
    seed: int,
    level: float = 0.95,
) -> tuple[float, float]:
    """Percentile bootstrap: resample data units with replacement, evaluate
    the metric on each resample, take the central quantiles."""
    if n_resamples < 100:
        raise ConfigError("bootstrap needs at least 100 resamples")
    if not 0 < level < 1:
        raise ConfigError("level must lie in (0, 1)")
    if not data:
        raise ValidationError("bootstrap needs non-empty data")
    rng = random.Random(seed)
    data = list(data)
    values = []
    for _ in range(n_resamples):
        sample = [data[rng.randrange(len(data))] for _ in data]
        values.append(float(metric_fn(sample)))
    tail = (1.0 - level) / 2.0
    low, high = np.percentile(values, [100 * tail, 100 * (1 - tail)])
    return float(low), float(high)


# ---------------------------------------------------------------------------
# full evaluation report


@dataclass(frozen=True)
class EvaluationReport:
    total_mse: float
    total_alpha_interval: float
    total_weighted_acc: float
    per_dim_spearman_mean: float
    per_dim_spearman_sd: float
    per_dim_alpha_mean: float
    verifier_accuracy: float
    verifier_precision: float
    verifier_recall: float
    verifier_f1: float
    verifier_majority_accuracy: float
    per_dimension_verifier_accuracy: dict[str, float] = field(default_factory=dict)
    confidence_intervals: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.total_weighted_acc <= 1:
            raise ValidationError("weighted accuracy must lie in [0, 1]")
        if self.total_alpha_interval > 1 + 1e-9:
            raise ValidationError("alpha cannot exceed 1")

    def to_dict(self) -> dict:
        out = {
            "total_mse": self.total_mse,
            "total_alpha_interval": self.total_alpha_interval,
            "total_weighted_acc": self.total_weighted_acc,
            "per_dim_spearman_mean": self.per_dim_spearman_mean,
            "per_dim_spearman_sd": self.per_dim_spearman_sd,
            "per_dim_alpha_mean": self.per_dim_alpha_mean,
            "verifier_accuracy": self.verifier_accuracy,
            "verifier_precision": self.verifier_precision,
            "verifier_recall": self.verifier_recall,
            "verifier_f1": self.verifier_f1,
            "verifier_majority_accuracy": self.verifier_majority_accuracy,
            "per_dimension_verifier_accuracy": dict(
                sorted(self.per_dimension_verifier_accuracy.items())
            ),
        }
        if self.confidence_intervals:
            out["confidence_intervals"] = {
                name: list(bounds)
                for name, bounds in sorted(self.confidence_intervals.items())
            }
        return out


def metrics_json(report: EvaluationReport) -> str:
    """Canonical serialization: stable key order, fixed layout, newline end."""
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def evaluate_predictions(
    pred_set: PredictionSet,
    decisions: Mapping[tuple[str, str], bool] | None = None,
    bootstrap: tuple[int, int] | None = None,
    literal_weighted: bool = False,
) -> EvaluationReport:
    """All report-level and dimension-level metrics for one prediction set.

    decisions maps (report_id, dimension_id) to the verifier decision; when
    absent the implied decision predicted > 0 is used. bootstrap is
    (n_resamples, seed) for report-level CIs on MSE and weighted accuracy.
    """
    rubric = pred_set.rubric
    pred_totals, truth_totals, report_ids = totals(pred_set)
    grouped = pred_set.by_report()

    dim_order = [d.id for d in rubric.dimensions]
    preds_by_report = {
        rid: [grouped[rid][d].predicted for d in dim_order] for rid in report_ids
    }
    truths_by_report = {
        rid: [grouped[rid][d].truth for d in dim_order] for rid in report_ids
    }

    try:
        sp_mean, sp_sd = per_dimension_spearman(preds_by_report, truths_by_report)
    except UndefinedMetricError:
        sp_mean, sp_sd = float("nan"), float("nan")

    dim_alphas = []
    for d in dim_order:
        preds = [grouped[rid][d].predicted for rid in report_ids]
        truths = [grouped[rid][d].truth for rid in report_ids]
        dim_alphas.append(krippendorff_alpha_interval([preds, truths]))

    flat_decisions = []
    flat_labels = []
    per_dim_acc: dict[str, float] = {}
    for d in dim_order:
        d_decisions = []
        d_labels = []
        for rid in report_ids:
            e = grouped[rid][d]
            if decisions is not None:
                dec = bool(decisions[(rid, d)])
            else:
                dec = e.predicted > 0
            d_decisions.append(dec)
            d_labels.append(e.truth > 0)
        per_dim_acc[d] = verifier_binary_metrics(d_decisions, d_labels).accuracy
        flat_decisions.extend(d_decisions)
        flat_labels.extend(d_labels)
    binary = verifier_binary_metrics(flat_decisions, flat_labels)
    majority = majority_baseline(flat_labels)

    cis: dict[str, tuple[float, float]] = {}
    if bootstrap is not None:
        n_resamples, seed = bootstrap
        pairs = list(zip(pred_totals, truth_totals))
        cis["total_mse"] = bootstrap_ci(
            lambda s: mse([p for p, _ in s], [t for _, t in s]),
            pairs,
            n_resamples,
            seed,
        )
        cis["total_weighted_acc"] = bootstrap_ci(
            lambda s: weighted_accuracy(
                [p for p, _ in s],
                [t for _, t in s],
                rubric.total_max,
                literal=literal_weighted,
            ),
            pairs,
            n_resamples,
            seed,
        )

    return EvaluationReport(
        total_mse=mse(pred_totals, truth_totals),
        total_alpha_interval=krippendorff_alpha_interval([pred_totals, truth_totals]),
        total_weighted_acc=weighted_accuracy(
            pred_totals, truth_totals, rubric.total_max, literal=literal_weighted
        ),
        per_dim_spearman_mean=sp_mean,
        per_dim_spearman_sd=sp_sd,
        per_dim_alpha_mean=float(np.mean(dim_alphas)),
        verifier_accuracy=binary.accuracy,
        verifier_precision=binary.precision,
        verifier_recall=binary.recall,
        verifier_f1=binary.f1,
        verifier_majority_accuracy=majority.accuracy,
        per_dimension_verifier_accuracy=per_dim_acc,
        confidence_intervals=cis,
    )


def export_predictions_csv(pred_set: PredictionSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["report_id", "dimension_id", "predicted", "truth"])
        for e in pred_set.entries:
            writer.writerow([e.report_id, e.dimension_id, e.predicted, e.truth])
