"""Domain types, sentence segmentation, and JSONL corpus IO.

A corpus is a single rubric plus reports, ground-truth dimension scores, and
optional human sentence selections, stored one JSON object per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import re

from .errors import EmptyDocumentError, SchemaError, ValidationError

SPLITS = ("train", "val", "test")
MODES = ("scored", "presence")

# Period-terminated tokens that do not end a sentence.
_ABBREVIATIONS = frozenset({
    "fig.", "figs.", "eq.", "eqs.", "tab.", "sec.", "ref.", "refs.",
    "vs.", "cf.", "al.", "e.g.", "i.e.", "etc.", "ca.", "approx.",
    "dr.", "mr.", "mrs.", "ms.", "prof.", "dept.", "no.", "st.",
})

# A run of terminal punctuation, captured, followed by whitespace and then an
# uppercase letter or digit (the start of the next sentence).
_BOUNDARY_RE = re.compile(r"([.!?]+)(\s+)(?=[A-Z0-9])")


@dataclass(frozen=True)
class Sentence:
    """One segmented sentence; ``start``/``end`` are character offsets into the
    source text (-1 when constructed without span information)."""

    position: int
    text: str
    start: int = -1
    end: int = -1

    def __post_init__(self):
        if self.position < 0:
            raise ValidationError(f"sentence position must be >= 0, got {self.position}")
        if not self.text.strip():
            raise ValidationError("sentence text is empty after trimming")


@dataclass(frozen=True)
class RubricDimension:
    """One evaluative criterion; ``query_text`` is used as the retrieval query."""

    id: str
    index: int
    query_text: str
    max_score: int = 5
    mode: str = "scored"

    def __post_init__(self):
        if self.index < 1:
            raise ValidationError(f"dimension index must be >= 1, got {self.index}")
        if not self.query_text.strip():
            raise ValidationError(f"dimension {self.id!r} has empty query text")
        if self.mode not in MODES:
            raise ValidationError(f"dimension {self.id!r} has unknown mode {self.mode!r}")
        expected = 5 if self.mode == "scored" else 1
        if self.max_score != expected:
            raise ValidationError(
                f"dimension {self.id!r}: max_score must be {expected} in {self.mode} mode, "
                f"got {self.max_score}"
            )


@dataclass(frozen=True)
class Rubric:
    id: str
    dimensions: tuple[RubricDimension, ...]

    def __post_init__(self):
        if not self.dimensions:
            raise ValidationError("rubric has no dimensions")
        indices = [d.index for d in self.dimensions]
        if indices != list(range(1, len(indices) + 1)):
            raise ValidationError(f"dimension indices must be consecutive 1..n, got {indices}")
        ids = [d.id for d in self.dimensions]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate dimension ids in rubric")

    @property
    def total_max(self) -> int:
        return sum(d.max_score for d in self.dimensions)

    @property
    def mode(self) -> str:
        return self.dimensions[0].mode

    def dimension(self, dimension_id: str) -> RubricDimension:
        for d in self.dimensions:
            if d.id == dimension_id:
                return d
        raise ValidationError(f"rubric {self.id!r} has no dimension {dimension_id!r}")


@dataclass(frozen=True)
class Report:
    id: str
    raw_text: str
    sentences: tuple[Sentence, ...]
    split: str
    assignment_id: str = ""

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValidationError(f"report {self.id!r} has unknown split {self.split!r}")
        if not self.sentences:
            raise ValidationError(f"report {self.id!r} has no sentences")
        positions = [s.position for s in self.sentences]
        if positions != list(range(len(positions))):
            raise ValidationError(f"report {self.id!r}: sentence positions must be 0..n-1")
        covered = sum(len(s.text) - _whitespace_count(s.text) for s in self.sentences)
        total = len(self.raw_text) - _whitespace_count(self.raw_text)
        if total > 0 and covered < 0.99 * total:
            raise ValidationError(
                f"report {self.id!r}: sentences cover {covered}/{total} non-whitespace chars"
            )

    @classmethod
    def from_text(cls, id: str, raw_text: str, split: str, assignment_id: str = "") -> "Report":
        return cls(
            id=id,
            raw_text=raw_text,
            sentences=tuple(segment_sentences(raw_text)),
            split=split,
            assignment_id=assignment_id,
        )


@dataclass(frozen=True)
class DimensionScore:
    report_id: str
    dimension_id: str
    score: int

    def __post_init__(self):
        if not isinstance(self.score, int) or isinstance(self.score, bool):
            raise ValidationError(
                f"score for report {self.report_id!r} dimension {self.dimension_id!r} "
                f"must be an integer, got {self.score!r}"
            )
        if self.score < 0:
            raise ValidationError(
                f"score for report {self.report_id!r} dimension {self.dimension_id!r} "
                f"is negative: {self.score}"
            )


@dataclass(frozen=True)
class SentenceSelection:
    """Sentence positions one rater marked relevant for a (report, dimension) pair."""

    report_id: str
    dimension_id: str
    rater_id: str
    positions: frozenset[int]


@dataclass
class Corpus:
    rubric: Rubric
    reports: list[Report]
    scores: list[DimensionScore]
    selections: list[SentenceSelection] = field(default_factory=list)

    def reports_in_split(self, split: str) -> list[Report]:
        if split not in SPLITS:
            raise ValidationError(f"unknown split {split!r}")
        return [r for r in self.reports if r.split == split]

    def score_lookup(self) -> dict[tuple[str, str], int]:
        return {(s.report_id, s.dimension_id): s.score for s in self.scores}

    def validate(self) -> None:
        report_lengths = {r.id: len(r.sentences) for r in self.reports}
        dim_ids = {d.id: d for d in self.rubric.dimensions}
        seen: set[tuple[str, str]] = set()
        for s in self.scores:
            if s.report_id not in report_lengths:
                raise ValidationError(
                    f"score record references unknown report {s.report_id!r}"
                )
            if s.dimension_id not in dim_ids:
                raise ValidationError(
                    f"score record for report {s.report_id!r} references unknown "
                    f"dimension {s.dimension_id!r}"
                )
            bound = dim_ids[s.dimension_id].max_score
            if s.score > bound:
                raise ValidationError(
                    f"score record for report {s.report_id!r} dimension "
                    f"{s.dimension_id!r}: score {s.score} exceeds max {bound}"
                )
            key = (s.report_id, s.dimension_id)
            if key in seen:
                raise ValidationError(
                    f"duplicate score record for report {s.report_id!r} "
                    f"dimension {s.dimension_id!r}"
                )
            seen.add(key)
        for sel in self.selections:
            if sel.report_id not in report_lengths:
                raise ValidationError(
                    f"selection record references unknown report {sel.report_id!r}"
                )
            if sel.dimension_id not in dim_ids:
                raise ValidationError(
                    f"selection record for report {sel.report_id!r} references unknown "
                    f"dimension {sel.dimension_id!r}"
                )
            n = report_lengths[sel.report_id]
            bad = [p for p in sel.positions if p < 0 or p >= n]
            if bad:
                raise ValidationError(
                    f"selection by rater {sel.rater_id!r} on report {sel.report_id!r} "
                    f"names positions {sorted(bad)} outside 0..{n - 1}"
                )


def _whitespace_count(text: str) -> int:
    return sum(1 for c in text if c.isspace())


def _is_abbreviation(head: str) -> bool:
    """True when the text ending at a candidate boundary ends in an abbreviation."""
    parts = head.split()
    if not parts:
        return False
    token = parts[-1].lower().lstrip("\"'([{")
    if token in _ABBREVIATIONS:
        return True
    # Single-letter initials such as "A." or "J."
    return len(token) == 2 and token[0].isalpha() and token.endswith(".")


def segment_sentences(raw_text: str) -> list[Sentence]:
    """Rule-based, deterministic sentence splitter.

    Splits after terminal punctuation (., !, ?) followed by whitespace and an
    uppercase letter or digit, except after a known abbreviation. The returned
    sentences carry character spans into ``raw_text``.
    """
    if not raw_text or not raw_text.strip():
        raise EmptyDocumentError("cannot segment an empty document")

    cut_points: list[tuple[int, int]] = []  # (sentence end, next sentence start)
    for m in _BOUNDARY_RE.finditer(raw_text):
        end = m.end(1)
        if _is_abbreviation(raw_text[:end]):
            continue
        cut_points.append((end, m.end()))

    sentences: list[Sentence] = []
    span_start = 0
    for end, nxt in cut_points + [(len(raw_text), len(raw_text))]:
        chunk = raw_text[span_start:end]
        stripped = chunk.strip()
        if stripped:
            lead = len(chunk) - len(chunk.lstrip())
            begin = span_start + lead
            sentences.append(
                Sentence(
                    position=len(sentences),
                    text=stripped,
                    start=begin,
                    end=begin + len(stripped),
                )
            )
        span_start = nxt
    return sentences


# ---------------------------------------------------------------------------
# JSONL IO


def rubric_to_dict(rubric: Rubric) -> dict:
    return {
        "id": rubric.id,
        "dimensions": [
            {
                "id": d.id,
                "index": d.index,
                "query_text": d.query_text,
                "max_score": d.max_score,
                "mode": d.mode,
            }
            for d in rubric.dimensions
        ],
    }


def rubric_from_dict(data: dict) -> Rubric:
    return Rubric(
        id=str(data["id"]),
        dimensions=tuple(
            RubricDimension(
                id=str(d["id"]),
                index=int(d["index"]),
                query_text=str(d["query_text"]),
                max_score=int(d.get("max_score", 5)),
                mode=str(d.get("mode", "scored")),
            )
            for d in data["dimensions"]
        ),
    )


def iter_corpus_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Stream (line_number, record) pairs from a corpus file, one line at a time."""
    with Path(path).open("r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"invalid JSON: {e.msg}", line_number=i) from e
            if not isinstance(obj, dict):
                raise SchemaError("record is not a JSON object", line_number=i)
            if "kind" not in obj:
                raise SchemaError("record has no 'kind' field", line_number=i)
            yield i, obj


def _require(record: dict, key: str, line: int):
    if key not in record:
        raise SchemaError(f"{record.get('kind')} record missing {key!r}", line_number=line)
    return record[key]


def _parse_dimension(raw: dict, line: int) -> RubricDimension:
    try:
        return RubricDimension(
            id=str(_require(raw, "id", line)),
            index=int(_require(raw, "index", line)),
            query_text=str(_require(raw, "query_text", line)),
            max_score=int(raw.get("max_score", 5)),
            mode=str(raw.get("mode", "scored")),
        )
    except (TypeError, ValueError) as e:
        raise SchemaError(f"bad dimension field: {e}", line_number=line) from e


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a JSONL corpus. Record order within each kind is kept."""
    rubric: Rubric | None = None
    reports: list[Report] = []
    scores: list[DimensionScore] = []
    selections: list[SentenceSelection] = []

    for line, rec in iter_corpus_records(path):
        kind = rec["kind"]
        if kind == "rubric":
            if rubric is not None:
                raise SchemaError("second rubric record in corpus", line_number=line)
            dims = _require(rec, "dimensions", line)
            if not isinstance(dims, list):
                raise SchemaError("rubric 'dimensions' must be a list", line_number=line)
            _require(rec, "id", line)
            rubric = Rubric(
                id=str(rec["id"]),
                dimensions=tuple(_parse_dimension(d, line) for d in dims),
            )
        elif kind == "report":
            reports.append(
                Report.from_text(
                    id=str(_require(rec, "id", line)),
                    raw_text=str(_require(rec, "text", line)),
                    split=str(rec.get("split", "train")),
                    assignment_id=str(rec.get("assignment_id", "")),
                )
            )
        elif kind == "score":
            raw_score = _require(rec, "score", line)
            if not isinstance(raw_score, int) or isinstance(raw_score, bool):
                raise SchemaError(f"score must be an integer, got {raw_score!r}", line_number=line)
            scores.append(
                DimensionScore(
                    report_id=str(_require(rec, "report_id", line)),
                    dimension_id=str(_require(rec, "dimension_id", line)),
                    score=raw_score,
                )
            )
        elif kind == "selection":
            positions = _require(rec, "positions", line)
            if not isinstance(positions, list):
                raise SchemaError("selection 'positions' must be a list", line_number=line)
            selections.append(
                SentenceSelection(
                    report_id=str(_require(rec, "report_id", line)),
                    dimension_id=str(_require(rec, "dimension_id", line)),
                    rater_id=str(_require(rec, "rater_id", line)),
                    positions=frozenset(int(p) for p in positions),
                )
            )
        else:
            raise SchemaError(f"unknown record kind {kind!r}", line_number=line)

    if rubric is None:
        raise ValidationError(f"corpus {path} contains no rubric record")
    corpus = Corpus(rubric=rubric, reports=reports, scores=scores, selections=selections)
    corpus.validate()
    return corpus


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus as JSONL (rubric first, then reports, scores, selections)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": "rubric", **rubric_to_dict(corpus.rubric)}) + "\n")
        for r in corpus.reports:
            fh.write(json.dumps({
                "kind": "report",
                "id": r.id,
                "text": r.raw_text,
                "split": r.split,
                "assignment_id": r.assignment_id,
            }) + "\n")
        for s in corpus.scores:
            fh.write(json.dumps({
                "kind": "score",
                "report_id": s.report_id,
                "dimension_id": s.dimension_id,
                "score": s.score,
            }) + "\n")
        for sel in corpus.selections:
            fh.write(json.dumps({
                "kind": "selection",
                "report_id": sel.report_id,
                "dimension_id": sel.dimension_id,
                "rater_id": sel.rater_id,
                "positions": sorted(sel.positions),
            }) + "\n")
