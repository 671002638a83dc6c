"""Checkpoint layout and atomic save/load.

A checkpoint directory holds config.json, rubric.json, a verifier/ and/or
grader/ subdirectory with projections and training logs, and a manifest of
sha256 content hashes. Saves build a temporary sibling directory and swap it
in, so a partial checkpoint is never visible at the target path.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, config_from_dict
from .corpus import Rubric, rubric_from_dict, rubric_to_dict
from .encoder import (
    DeterministicTestProvider,
    EncoderHandle,
    deterministic_test_handle,
    pretrained_handle,
    with_projection,
)
from .errors import ValidationError
from .grader import GraderConfig, GraderHead, GraderHeads
from .training import EpochStats, GraderTrainResult, VerifierTrainResult
from .verifier import VerifierConfig

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass
class Checkpoint:
    run_config: RunConfig
    rubric: Rubric
    verifier: VerifierTrainResult | None = None
    grader: GraderTrainResult | None = None


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_log(path: Path, log) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for entry in log:
            fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")


def _read_log(path: Path) -> tuple[EpochStats, ...]:
    entries = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            entries.append(EpochStats(d["epoch"], d["train_loss"], d["val_loss"]))
    return tuple(entries)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _save_verifier(dir_: Path, result: VerifierTrainResult) -> None:
    dir_.mkdir()
    _write_json(
        dir_ / "config.json",
        {
            "k": result.config.k,
            "threshold": result.config.threshold,
            "epsilon": result.config.epsilon,
            "dimension_weights": result.dimension_weights,
        },
    )
    np.save(dir_ / "q_projection.npy", result.q_handle.projection)
    np.save(dir_ / "s_projection.npy", result.s_handle.projection)
    _write_log(dir_ / "training_log.jsonl", result.log)


def _save_grader(dir_: Path, result: GraderTrainResult) -> None:
    dir_.mkdir()
    _write_json(
        dir_ / "config.json",
        {
            "alpha": result.config.alpha,
            "loss": result.config.loss,
            "head": result.config.head,
            "report_strategy": result.config.report_strategy,
            "rel_aggregation": result.config.rel_aggregation,
            "include_report": result.include_report,
            "include_rel": result.include_rel,
        },
    )
    np.save(dir_ / "q_projection.npy", result.q_handle.projection)
    np.save(dir_ / "r_projection.npy", result.r_handle.projection)
    if result.heads.mode == "shared":
        np.savez(dir_ / "head.npz", weight=result.heads.shared.weight,
                 bias=result.heads.shared.bias)
    else:
        for dim_id, head in sorted(result.heads.per_dimension.items()):
            np.savez(dir_ / f"head_{dim_id}.npz", weight=head.weight, bias=head.bias)
    _write_log(dir_ / "training_log.jsonl", result.log)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    """Write the checkpoint atomically: fully build a temp directory next to
    the target, hash every file into the manifest, then swap it in."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=path.name + ".tmp-", dir=path.parent))
    try:
        _write_json(
            tmp / "config.json",
            {"format_version": FORMAT_VERSION, "run_config": ckpt.run_config.to_dict()},
        )
        _write_json(tmp / "rubric.json", rubric_to_dict(ckpt.rubric))
        if ckpt.verifier is not None:
            _save_verifier(tmp / "verifier", ckpt.verifier)
        if ckpt.grader is not None:
            _save_grader(tmp / "grader", ckpt.grader)
        manifest = {
            "files": {
                str(p.relative_to(tmp)): _sha256(p)
                for p in sorted(tmp.rglob("*"))
                if p.is_file()
            }
        }
        _write_json(tmp / MANIFEST_NAME, manifest)
        if path.exists():
            shutil.rmtree(path)
        os.replace(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return path


def verify_manifest(path: str | Path) -> None:
    path = Path(path)
    manifest = json.loads((path / MANIFEST_NAME).read_text(encoding="utf-8"))
    for rel, expected in manifest["files"].items():
        target = path / rel
        if not target.is_file():
            raise ValidationError(f"checkpoint file missing: {rel}")
        actual = _sha256(target)
        if actual != expected:
            raise ValidationError(f"checkpoint file corrupted: {rel}")


def _base_handles(config: RunConfig, sides: tuple[str, str]) -> tuple[EncoderHandle, EncoderHandle]:
    if config.provider == "deterministic_test":
        impl = DeterministicTestProvider(config.embedding_dim, config.max_tokens)
        return (
            deterministic_test_handle(sides[0], impl=impl),
            deterministic_test_handle(sides[1], impl=impl),
        )
    first = pretrained_handle(sides[0], config.model_name)
    return first, pretrained_handle(sides[1], config.model_name, impl=first.impl)


def _load_verifier(dir_: Path, config: RunConfig) -> VerifierTrainResult:
    meta = json.loads((dir_ / "config.json").read_text(encoding="utf-8"))
    q_base, s_base = _base_handles(config, ("query", "passage"))
    return VerifierTrainResult(
        q_handle=with_projection(q_base, np.load(dir_ / "q_projection.npy")),
        s_handle=with_projection(s_base, np.load(dir_ / "s_projection.npy")),
        config=VerifierConfig(
            k=meta["k"], threshold=meta["threshold"], epsilon=meta["epsilon"]
        ),
        log=_read_log(dir_ / "training_log.jsonl"),
        dimension_weights=meta.get("dimension_weights", {}),
    )


def _load_grader(dir_: Path, config: RunConfig, rubric: Rubric) -> GraderTrainResult:
    meta = json.loads((dir_ / "config.json").read_text(encoding="utf-8"))
    q_base, r_base = _base_handles(config, ("query", "passage"))
    grader_config = GraderConfig(
        alpha=meta["alpha"],
        loss=meta["loss"],
        head=meta["head"],
        report_strategy=meta["report_strategy"],
        rel_aggregation=meta.get("rel_aggregation", "mean"),
    )
    if grader_config.head == "shared":
        data = np.load(dir_ / "head.npz")
        heads = GraderHeads(mode="shared", shared=GraderHead(data["weight"], data["bias"]))
    else:
        per = {}
        for dim in rubric.dimensions:
            file = dir_ / f"head_{dim.id}.npz"
            if not file.is_file():
                raise ValidationError(f"checkpoint missing head for dimension {dim.id!r}")
            data = np.load(file)
            per[dim.id] = GraderHead(data["weight"], data["bias"])
        heads = GraderHeads(mode="per_dimension", per_dimension=per)
    return GraderTrainResult(
        q_handle=with_projection(q_base, np.load(dir_ / "q_projection.npy")),
        r_handle=with_projection(r_base, np.load(dir_ / "r_projection.npy")),
        heads=heads,
        config=grader_config,
        log=_read_log(dir_ / "training_log.jsonl"),
        include_report=meta["include_report"],
        include_rel=meta["include_rel"],
    )


def load_checkpoint(path: str | Path, verify: bool = True) -> Checkpoint:
    path = Path(path)
    if not (path / "config.json").is_file():
        raise ValidationError(f"{path} is not a checkpoint directory")
    if verify:
        verify_manifest(path)
    meta = json.loads((path / "config.json").read_text(encoding="utf-8"))
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValidationError(
            f"unsupported checkpoint format {meta.get('format_version')!r}"
        )
    config = config_from_dict(meta["run_config"])
    rubric = rubric_from_dict(json.loads((path / "rubric.json").read_text(encoding="utf-8")))
    verifier = None
    grader = None
    if (path / "verifier").is_dir():
        verifier = _load_verifier(path / "verifier", config)
    if (path / "grader").is_dir():
        grader = _load_grader(path / "grader", config, rubric)
    return Checkpoint(run_config=config, rubric=rubric, verifier=verifier, grader=grader)
