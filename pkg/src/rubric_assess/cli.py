"""Command-line interface.

Commands: synth, train, grade, evaluate, agreement, grid. Exit codes are 0
for success, 1 for validation problems, 2 for runtime failures such as
unwritable paths.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .corpus import (
    Report,
    SentenceSelection,
    iter_corpus_records,
    load_corpus,
    rubric_to_dict,
    save_corpus,
)
from .errors import RubricAssessError, SchemaError, ValidationError
from .metrics import masi_alpha, metrics_json
from .pipeline import (
    ABLATIONS,
    assess,
    assess_presence,
    best_val_loss,
    evaluate_checkpoint,
    grid_search,
    train_pipeline,
)
from .synth import SynthSettings, generate_synthetic_corpus


@dataclass
class CommandResult:
    exit_code: int = 0
    artifacts_written: list[Path] = field(default_factory=list)


def _load_config(path: str | None) -> RunConfig:
    return load_run_config(path)


def cmd_synth(args) -> CommandResult:
    settings = SynthSettings(mode=args.mode, skew=args.skew)
    corpus = generate_synthetic_corpus(args.seed, args.n_reports, args.n_dims, settings)
    save_corpus(corpus, args.out)
    return CommandResult(artifacts_written=[Path(args.out)])


def cmd_train(args) -> CommandResult:
    corpus = load_corpus(args.corpus)
    config = _load_config(args.config)
    out_dir = Path(args.out_dir)
    artifacts = []
    if args.ablation:
        variant = args.ablation.replace("-", "_")
        from .pipeline import ablation_config

        config = ablation_config(config, variant)
        checkpoint = train_pipeline(corpus, config)
        ckpt_path = save_checkpoint(checkpoint, out_dir / f"checkpoint-{variant}")
        artifacts.append(ckpt_path)
        report, _ = evaluate_checkpoint(checkpoint, corpus, split="test")
        row = {
            "variant": variant,
            "config": config.to_dict(),
            "val_loss": best_val_loss(checkpoint),
            "metrics": report.to_dict(),
        }
        leaderboard = out_dir / "ablations.jsonl"
        with leaderboard.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
        artifacts.append(leaderboard)
    else:
        checkpoint = train_pipeline(corpus, config)
        artifacts.append(save_checkpoint(checkpoint, out_dir / "checkpoint"))
    print(f"final validation loss: {best_val_loss(checkpoint):.6f}")
    return CommandResult(artifacts_written=artifacts)


def _read_reports(path: str, checkpoint) -> list[Report]:
    reports = []
    for line, rec in iter_corpus_records(path):
        kind = rec["kind"]
        if kind == "rubric":
            if rec.get("id") != checkpoint.rubric.id:
                raise ValidationError(
                    f"input rubric {rec.get('id')!r} does not match checkpoint "
                    f"rubric {checkpoint.rubric.id!r}"
                )
        elif kind == "report":
            if "id" not in rec or "text" not in rec:
                raise SchemaError("report record missing id or text", line_number=line)
            reports.append(
                Report.from_text(
                    id=str(rec["id"]),
                    raw_text=str(rec["text"]),
                    split=str(rec.get("split", "test")),
                )
            )
    if not reports:
        raise ValidationError(f"no report records in {path}")
    return reports


def cmd_grade(args) -> CommandResult:
    checkpoint = load_checkpoint(args.checkpoint)
    if args.mode != checkpoint.run_config.mode:
        raise ValidationError(
            f"checkpoint is {checkpoint.run_config.mode} mode; "
            f"rerun with --mode {checkpoint.run_config.mode}"
        )
    reports = _read_reports(args.input, checkpoint)
    dim_ids = [d.id for d in checkpoint.rubric.dimensions]
    out_csv = Path(args.out)
    diagnostics_path = out_csv.with_suffix(".json")
    diagnostics = {}
    with out_csv.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if args.mode == "presence":
            writer.writerow(["report_id", *dim_ids])
            for report in reports:
                decisions = assess_presence(checkpoint, report)
                writer.writerow([report.id, *decisions])
        else:
            writer.writerow(["report_id", *dim_ids, "total"])
            for report in reports:
                assessed = assess(checkpoint, report)
                scores = assessed.scores()
                writer.writerow([report.id, *(scores[d] for d in dim_ids), assessed.total])
                diagnostics[report.id] = {
                    da.dimension_id: {
                        "verifier_probability": da.verifier_probability,
                        "selected_positions": list(da.selected_positions),
                    }
                    for da in assessed.per_dimension
                }
    artifacts = [out_csv]
    if args.mode == "scored":
        diagnostics_path.write_text(
            json.dumps(diagnostics, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        artifacts.append(diagnostics_path)
    return CommandResult(artifacts_written=artifacts)


def cmd_evaluate(args) -> CommandResult:
    checkpoint = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.corpus)
    bootstrap = (args.bootstrap, args.seed) if args.bootstrap else None
    report, _ = evaluate_checkpoint(checkpoint, corpus, split=args.split, bootstrap=bootstrap)
    payload = metrics_json(report)
    artifacts = []
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        artifacts.append(Path(args.out))
    else:
        print(payload, end="")
    return CommandResult(artifacts_written=artifacts)


def cmd_agreement(args) -> CommandResult:
    selections = []
    for line, rec in iter_corpus_records(args.selections):
        if rec["kind"] != "selection":
            continue
        for key in ("report_id", "dimension_id", "rater_id", "positions"):
            if key not in rec:
                raise SchemaError(f"selection record missing {key!r}", line_number=line)
        selections.append(
            SentenceSelection(
                report_id=str(rec["report_id"]),
                dimension_id=str(rec["dimension_id"]),
                rater_id=str(rec["rater_id"]),
                positions=frozenset(int(p) for p in rec["positions"]),
            )
        )
    if not selections:
        raise ValidationError(f"no selection records in {args.selections}")
    alpha = masi_alpha(selections)
    print(f"masi_alpha {alpha:.4f}")
    by_rater: dict[str, list[int]] = {}
    for sel in selections:
        by_rater.setdefault(sel.rater_id, []).append(len(sel.positions))
    for rater in sorted(by_rater):
        sizes = by_rater[rater]
        print(
            f"rater {rater} n {len(sizes)} mean {np.mean(sizes):.2f} sd {np.std(sizes):.2f}"
        )
    return CommandResult()


def _parse_values(raw: str | None, cast):
    if raw is None:
        return None
    return tuple(cast(v) for v in raw.split(",") if v)


def cmd_grid(args) -> CommandResult:
    corpus = load_corpus(args.corpus)
    base = _load_config(args.config)
    kwargs = {}
    for name, cast in (
        ("learning_rates", float),
        ("batch_sizes", int),
        ("alphas", float),
        ("ks", int),
    ):
        values = _parse_values(getattr(args, name), cast)
        if values is not None:
            kwargs[name] = values
    result = grid_search(corpus, base, leaderboard_path=args.out, **kwargs)
    print(json.dumps({"best": result.best.to_dict()}, sort_keys=True, indent=2))
    return CommandResult(artifacts_written=[Path(args.out)])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rubric-assess",
        description="Rubric-based lab report assessment: train, grade, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-reports", type=int, required=True)
    p.add_argument("--n-dims", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["scored", "presence"], default="scored")
    p.add_argument("--skew", type=float, default=0.5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the two-stage pipeline")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", default=None, help="JSON run config file")
    p.add_argument("--out-dir", required=True)
    p.add_argument(
        "--ablation",
        default=None,
        help="train an ablation variant: " + ", ".join(a.replace("_", "-") for a in ABLATIONS),
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grade", help="score reports with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="JSONL file of report records")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--mode", choices=["scored", "presence"], default="scored")
    p.set_defaults(func=cmd_grade)

    p = sub.add_parser("evaluate", help="compute all metrics on a corpus split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples (0 = off)")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--out", default=None, help="metrics JSON path (default stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("agreement", help="inter-rater sentence-selection agreement")
    p.add_argument("--selections", required=True, help="JSONL file with selection records")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("grid", help="hyperparameter grid search")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="leaderboard JSONL path")
    p.add_argument("--learning-rates", default=None, help="comma-separated values")
    p.add_argument("--batch-sizes", default=None, help="comma-separated values")
    p.add_argument("--alphas", default=None, help="comma-separated values")
    p.add_argument("--ks", default=None, help="comma-separated values")
    p.set_defaults(func=cmd_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.func(args)
    except RubricAssessError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2
    return result.exit_code


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
