"""Deterministic synthetic corpus generator for desk-scale experiments.

Each rubric dimension owns a disjoint keyword family. A report embeds between
0 and 5 keyword-bearing sentences per dimension among filler sentences, and
the ground-truth score for a dimension is exactly the count of its keyword
sentences. That makes both the relevance signal and the ordinal score signal
learnable by construction.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import (
    Corpus,
    DimensionScore,
    Report,
    Rubric,
    RubricDimension,
    SentenceSelection,
)
from .errors import ConfigError

# One (theme, keyword family) per possible dimension; families are pairwise
# disjoint and disjoint from the filler vocabulary below.
_TOPICS: list[tuple[str, tuple[str, ...]]] = [
    ("research question", ("pendulum", "period", "swing", "oscillation", "amplitude", "release")),
    ("hypothesis", ("hypothesis", "predict", "expectation", "variables", "independent", "dependent")),
    ("energy analysis", ("energy", "kinetic", "potential", "conservation", "joules", "transfer")),
    ("force reasoning", ("force", "newton", "acceleration", "inertia", "friction", "momentum")),
    ("data collection", ("measurement", "stopwatch", "trials", "recorded", "tabulated", "averaging")),
    ("error discussion", ("uncertainty", "random", "systematic", "deviation", "precision", "calibration")),
    ("conclusion", ("conclusion", "evidence", "claim", "supports", "interpretation", "reasoning")),
    ("graph reading", ("graph", "slope", "axes", "plotted", "linear", "curve")),
]

_FILLERS = (
    "the", "we", "our", "then", "team", "went", "to", "class", "and", "wrote",
    "about", "what", "happened", "during", "lab", "while", "working", "with",
    "everyone", "before", "after", "carefully", "again", "next", "also",
    "together", "finally", "started", "finished", "notes", "notebook",
    "teacher", "group", "partner", "table", "bench", "morning", "afternoon",
)

_MAX_DIMS = len(_TOPICS)


@dataclass(frozen=True)
class SynthSettings:
    """Knobs for the generator beyond the (seed, n_reports, n_dims) triple.

    Report length grows with the number of keyword sentences (stronger
    reports are longer), so keyword proportions stay roughly constant and
    high scores cannot be read off keyword density alone; ``sd_sentences``
    is the sd of the extra length noise around that trend."""

    mode: str = "scored"
    skew: float = 0.5
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    mean_sentences: float = 25.0
    sd_sentences: float = 6.0
    n_selection_reports: int = 20


def _query_text(theme: str, family: tuple[str, ...]) -> str:
    a, b, c, d, e, f = family
    return (
        f"Addresses the {theme} by discussing {a} and {b} with attention to "
        f"{c} {d} {e} and {f}"
    )


def _keyword_sentence(rng: random.Random, family: tuple[str, ...]) -> str:
    kws = rng.sample(family, rng.randint(2, 3))
    words = kws + rng.sample(_FILLERS, rng.randint(4, 6))
    rng.shuffle(words)
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def _filler_sentence(rng: random.Random) -> str:
    words = rng.sample(_FILLERS, rng.randint(5, 9))
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def _score_weights(pole: int, skew: float, max_score: int) -> list[float]:
    # skew = 0 gives a uniform distribution; larger values pile mass near the pole.
    import math

    return [math.exp(-skew * abs(s - pole)) for s in range(max_score + 1)]


def _expected_keywords(n_dims: int, settings: SynthSettings) -> float:
    """Mean keyword-sentence count per report under the score sampler."""
    if settings.mode == "presence":
        total = 0.0
        for j in range(n_dims):
            p_present = 0.35 + 0.5 * j / max(n_dims - 1, 1)
            total += p_present * 2.0  # mean of randint(1, 3)
        return total
    total = 0.0
    for j in range(n_dims):
        pole = 5 if (j + 1) % 2 == 0 else 0
        weights = _score_weights(pole, settings.skew, 5)
        total += sum(s * w for s, w in zip(range(6), weights)) / sum(weights)
    return total


def _split_for(i: int, n: int, settings: SynthSettings) -> str:
    n_test = round(n * settings.test_fraction)
    n_val = round(n * settings.val_fraction)
    n_train = n - n_val - n_test
    if i < n_train:
        return "train"
    if i < n_train + n_val:
        return "val"
    return "test"


def generate_synthetic_corpus(
    seed: int,
    n_reports: int,
    n_dims: int,
    settings: SynthSettings | None = None,
) -> Corpus:
    """Build a fully deterministic corpus from (seed, sizes, settings)."""
    settings = settings or SynthSettings()
    if n_reports < 10:
        raise ConfigError(f"n_reports must be >= 10, got {n_reports}")
    if not 2 <= n_dims <= _MAX_DIMS:
        raise ConfigError(f"n_dims must be in [2, {_MAX_DIMS}], got {n_dims}")
    if settings.mode not in ("scored", "presence"):
        raise ConfigError(f"unknown mode {settings.mode!r}")
    if not 0 <= settings.val_fraction + settings.test_fraction < 1:
        raise ConfigError("val_fraction + test_fraction must be in [0, 1)")

    presence = settings.mode == "presence"
    rng = random.Random(seed)

    dims = []
    for i in range(n_dims):
        theme, family = _TOPICS[i]
        dims.append(
            RubricDimension(
                id=f"d{i + 1}",
                index=i + 1,
                query_text=_query_text(theme, family),
                max_score=1 if presence else 5,
                mode=settings.mode,
            )
        )
    rubric = Rubric(id=f"synthetic-{settings.mode}-{n_dims}d", dimensions=tuple(dims))

    reports: list[Report] = []
    scores: list[DimensionScore] = []
    selections: list[SentenceSelection] = []
    length_ratio = max(settings.mean_sentences / _expected_keywords(n_dims, settings), 1.2)

    for i in range(n_reports):
        report_id = f"r{i + 1:04d}"
        tagged: list[tuple[str, str]] = []  # (dimension_id or "", sentence text)
        target_scores: dict[str, int] = {}
        for j, dim in enumerate(rubric.dimensions):
            _, family = _TOPICS[j]
            if presence:
                p_present = 0.35 + 0.5 * j / max(n_dims - 1, 1)
                present = rng.random() < p_present
                target_scores[dim.id] = 1 if present else 0
                n_kw = rng.randint(1, 3) if present else 0
            else:
                # High dims peak at 4, not 5: the top classes blur together
                # (top-k evidence saturates), and an interior mode keeps
                # errors there two-sided rather than clipped at the scale end.
                pole = 4 if dim.index % 2 == 0 else 0
                weights = _score_weights(pole, settings.skew, dim.max_score)
                score = rng.choices(range(dim.max_score + 1), weights=weights)[0]
                target_scores[dim.id] = score
                n_kw = score
            for _ in range(n_kw):
                tagged.append((dim.id, _keyword_sentence(rng, family)))

        n_keyword = len(tagged)
        target_total = round(
            n_keyword * length_ratio + rng.gauss(0.0, settings.sd_sentences)
        )
        target_total = max(target_total, n_keyword + 3, 10)
        for _ in range(target_total - n_keyword):
            tagged.append(("", _filler_sentence(rng)))
        rng.shuffle(tagged)

        raw_text = " ".join(text for _, text in tagged)
        reports.append(Report.from_text(report_id, raw_text, _split_for(i, n_reports, settings),
                                        assignment_id=rubric.id))
        for dim in rubric.dimensions:
            scores.append(DimensionScore(report_id, dim.id, target_scores[dim.id]))

        if i < min(settings.n_selection_reports, n_reports):
            keyword_positions = {
                dim.id: frozenset(
                    pos for pos, (owner, _) in enumerate(tagged) if owner == dim.id
                )
                for dim in rubric.dimensions
            }
            n_sent = len(tagged)
            for dim in rubric.dimensions:
                exact = keyword_positions[dim.id]
                selections.append(SentenceSelection(report_id, dim.id, "rater-a", exact))
                noisy = set(exact)
                if len(noisy) >= 2 and rng.random() < 0.3:
                    noisy.discard(rng.choice(sorted(noisy)))
                if rng.random() < 0.3:
                    noisy.add(rng.randrange(n_sent))
                selections.append(
                    SentenceSelection(report_id, dim.id, "rater-b", frozenset(noisy))
                )

    corpus = Corpus(rubric=rubric, reports=reports, scores=scores, selections=selections)
    corpus.validate()
    return corpus


def keyword_family(dimension_index: int) -> tuple[str, ...]:
    """Keyword family used for the dimension with the given 1-based index."""
    if not 1 <= dimension_index <= _MAX_DIMS:
        raise ConfigError(f"dimension index must be in [1, {_MAX_DIMS}]")
    return _TOPICS[dimension_index - 1][1]
