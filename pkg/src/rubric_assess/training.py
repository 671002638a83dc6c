"""Seeded torch trainers for the two pipeline stages.

Both stages keep the base encoder frozen and learn linear projections over
its output (plus the grader's prediction head). Training runs in float64 on
a single thread so that repeated same-seed runs are bit-identical; the
learned matrices are exported back to numpy for inference.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

import numpy as np
import torch

from .corpus import Corpus, Report
from .encoder import EncoderHandle, encode, encode_report, with_projection
from .errors import ConfigError, ValidationError
from .grader import N_CLASSES, GraderConfig, GraderHead, GraderHeads
from .verifier import (
    PROB_CLAMP,
    SIGMOID_CENTER,
    SIGMOID_SCALE,
    VerifierConfig,
    positive_weights,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 5e-3
    batch_size: int = 16
    epochs: int = 15

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss, "val_loss": self.val_loss}


@dataclass(frozen=True)
class VerifierTrainResult:
    q_handle: EncoderHandle
    s_handle: EncoderHandle
    config: VerifierConfig
    log: tuple[EpochStats, ...]
    dimension_weights: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class GraderTrainResult:
    q_handle: EncoderHandle
    r_handle: EncoderHandle
    heads: GraderHeads
    config: GraderConfig
    log: tuple[EpochStats, ...]
    include_report: bool = True
    include_rel: bool = True


def _setup_torch(seed: int):
    torch.manual_seed(seed)
    torch.set_num_threads(1)


def _pair_labels(corpus: Corpus, split: str) -> list[tuple[str, str, int]]:
    """(report_id, dimension_id, score) for every pair in the split."""
    lookup = corpus.score_lookup()
    pairs = []
    for report in corpus.reports_in_split(split):
        for dim in corpus.rubric.dimensions:
            key = (report.id, dim.id)
            if key not in lookup:
                raise ValidationError(f"missing score for {key}")
            pairs.append((report.id, dim.id, lookup[key]))
    return pairs


class _EmbeddingCache:
    """Base (unprojected) embeddings for queries, sentences, and reports."""

    def __init__(self, q_handle: EncoderHandle, s_handle: EncoderHandle, corpus: Corpus):
        self.queries = {
            d.id: encode(q_handle, [d.query_text])[0].values
            for d in corpus.rubric.dimensions
        }
        self.sentences: dict[str, np.ndarray] = {}
        self.reports: dict[str, Report] = {r.id: r for r in corpus.reports}
        self._s_handle = s_handle

    def sentence_matrix(self, report_id: str) -> np.ndarray:
        mat = self.sentences.get(report_id)
        if mat is None:
            report = self.reports[report_id]
            embs = encode(self._s_handle, [s.text for s in report.sentences])
            mat = np.stack([e.values for e in embs])
            self.sentences[report_id] = mat
        return mat


def _epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> list[list[int]]:
    order = list(range(n))
    random.Random(seed * 1_000_003 + epoch).shuffle(order)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


# ---------------------------------------------------------------------------
# verifier training


def _verifier_batch_loss(
    idx: list[int],
    tensors: dict,
    p_q: torch.Tensor,
    p_s: torch.Tensor,
    k: int,
    epsilon: float,
) -> torch.Tensor:
    rep_idx = tensors["report_idx"][idx]
    q = tensors["queries"][tensors["dim_idx"][idx]] @ p_q.T
    s = tensors["sentences"][rep_idx] @ p_s.T
    mask = tensors["mask"][rep_idx]

    q_norm = q / torch.linalg.norm(q, dim=1, keepdim=True).clamp_min(epsilon)
    s_norm = s / torch.linalg.norm(s, dim=2, keepdim=True).clamp_min(epsilon)
    sims = torch.einsum("bd,bnd->bn", q_norm, s_norm)
    sims = torch.where(mask, sims, torch.full_like(sims, -2.0))

    k_eff = min(k, sims.shape[1])
    top_vals, _ = torch.topk(sims, k_eff, dim=1)
    counts = tensors["n_sentences"][rep_idx].clamp(max=k_eff)
    keep = torch.arange(k_eff) < counts.unsqueeze(1)
    d = (top_vals * keep).sum(dim=1) / counts

    p = torch.sigmoid(SIGMOID_SCALE * (d - SIGMOID_CENTER))
    p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = tensors["labels"][idx]
    w = tensors["weights"][idx]
    loss = -(w * y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p))
    return loss.mean()


def train_verifier(
    corpus: Corpus,
    q_handle: EncoderHandle,
    s_handle: EncoderHandle,
    config: VerifierConfig,
    opt: OptimizerConfig,
    seed: int,
) -> VerifierTrainResult:
    """Stage 1: learn the two similarity projections with weighted BCE on
    the non-zero label; keeps the epoch with the lowest validation loss."""
    _setup_torch(seed)
    cache = _EmbeddingCache(q_handle, s_handle, corpus)
    dims = [d.id for d in corpus.rubric.dimensions]
    dim_index = {d: i for i, d in enumerate(dims)}
    weights = positive_weights(corpus)

    report_ids = sorted(cache.reports)
    report_index = {r: i for i, r in enumerate(report_ids)}
    mats = [cache.sentence_matrix(r) for r in report_ids]
    max_n = max(m.shape[0] for m in mats)
    d_model = q_handle.embedding_dim
    padded = np.zeros((len(mats), max_n, d_model))
    mask = np.zeros((len(mats), max_n), dtype=bool)
    for i, m in enumerate(mats):
        padded[i, : m.shape[0]] = m
        mask[i, : m.shape[0]] = True

    def pack(split: str) -> dict:
        pairs = _pair_labels(corpus, split)
        return {
            "report_idx": torch.tensor([report_index[r] for r, _, _ in pairs]),
            "dim_idx": torch.tensor([dim_index[d] for _, d, _ in pairs]),
            "labels": torch.tensor([1.0 if s > 0 else 0.0 for _, _, s in pairs]),
            "weights": torch.tensor(
                [weights[d] if s > 0 else 1.0 for _, d, s in pairs]
            ),
        }

    shared = {
        "queries": torch.from_numpy(np.stack([cache.queries[d] for d in dims])),
        "sentences": torch.from_numpy(padded),
        "mask": torch.from_numpy(mask),
        "n_sentences": torch.tensor([m.shape[0] for m in mats], dtype=torch.float64),
    }
    train_t = {**shared, **pack("train")}
    val_t = {**shared, **pack("val")}

    p_q = torch.eye(d_model, dtype=torch.float64, requires_grad=True)
    p_s = torch.eye(d_model, dtype=torch.float64, requires_grad=True)
    optimizer = torch.optim.Adam([p_q, p_s], lr=opt.learning_rate)

    n_train = len(train_t["labels"])
    n_val = len(val_t["labels"])
    best_val = float("inf")
    best_state = (p_q.detach().clone(), p_s.detach().clone())
    log = []
    for epoch in range(1, opt.epochs + 1):
        running = 0.0
        n_batches = 0
        for batch in _epoch_batches(n_train, opt.batch_size, seed, epoch):
            optimizer.zero_grad()
            loss = _verifier_batch_loss(batch, train_t, p_q, p_s, config.k, config.epsilon)
            loss.backward()
            optimizer.step()
            running += float(loss.detach())
            n_batches += 1
        with torch.no_grad():
            val_loss = float(
                _verifier_batch_loss(list(range(n_val)), val_t, p_q, p_s, config.k, config.epsilon)
            )
        log.append(EpochStats(epoch, running / n_batches, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_state = (p_q.detach().clone(), p_s.detach().clone())

    return VerifierTrainResult(
        q_handle=with_projection(q_handle, best_state[0].numpy()),
        s_handle=with_projection(s_handle, best_state[1].numpy()),
        config=config,
        log=tuple(log),
        dimension_weights=weights,
    )


# ---------------------------------------------------------------------------
# grader training


def _grader_batch_loss(
    idx: list[int],
    tensors: dict,
    params: dict,
    grader_config: GraderConfig,
    include_report: bool,
    include_rel: bool,
) -> torch.Tensor:
    parts = [tensors["q"][tensors["dim_idx"][idx]] @ params["p_q"].T]
    if include_report:
        parts.append(tensors["r"][idx] @ params["p_r"].T)
    if include_rel:
        parts.append(tensors["rel"][idx] @ params["p_r"].T)
    x = torch.cat(parts, dim=1)

    if grader_config.head == "shared":
        logits = x @ params["w"].T + params["b"]
    else:
        w = params["w"][tensors["dim_idx"][idx]]
        b = params["b"][tensors["dim_idx"][idx]]
        logits = torch.bmm(w, x.unsqueeze(2)).squeeze(2) + b

    y = tensors["labels"][idx]
    if grader_config.loss == "ce":
        return torch.nn.functional.cross_entropy(logits, y)
    probs = torch.softmax(logits, dim=1)
    classes = torch.arange(N_CLASSES, dtype=torch.float64)
    dist = (y.unsqueeze(1).to(torch.float64) - classes).abs() ** grader_config.alpha
    one_minus = (1.0 - probs).clamp_min(PROB_CLAMP)
    return (-(torch.log(one_minus) * dist).sum(dim=1)).mean()


def train_grader(
    corpus: Corpus,
    selections: dict[tuple[str, str], tuple[int, ...]] | None,
    q_handle: EncoderHandle,
    r_handle: EncoderHandle,
    grader_config: GraderConfig,
    opt: OptimizerConfig,
    seed: int,
    include_report: bool = True,
) -> GraderTrainResult:
    """Stage 2: learn the grader projections and prediction head on frozen
    sentence selections. selections = None drops the relevant-sentence slot
    (the verifier-less variants); include_report = False drops the report
    slot."""
    include_rel = selections is not None
    if not include_rel and not include_report:
        raise ConfigError("grader needs at least one of report or selections")
    _setup_torch(seed + 1)
    cache = _EmbeddingCache(q_handle, r_handle, corpus)
    dims = [d.id for d in corpus.rubric.dimensions]
    dim_index = {d: i for i, d in enumerate(dims)}
    d_model = q_handle.embedding_dim

    report_vecs: dict[str, np.ndarray] = {}
    if include_report:
        for r in corpus.reports:
            report_vecs[r.id] = encode_report(
                r_handle, r, grader_config.report_strategy
            ).values

    def rel_vec(report_id: str, dim_id: str) -> np.ndarray:
        positions = selections[(report_id, dim_id)]
        mat = cache.sentence_matrix(report_id)
        return mat[list(positions)].mean(axis=0)

    def pack(split: str) -> dict:
        pairs = _pair_labels(corpus, split)
        out = {
            "dim_idx": torch.tensor([dim_index[d] for _, d, _ in pairs]),
            "labels": torch.tensor([s for _, _, s in pairs]),
        }
        if include_report:
            out["r"] = torch.from_numpy(np.stack([report_vecs[r] for r, _, _ in pairs]))
        if include_rel:
            out["rel"] = torch.from_numpy(np.stack([rel_vec(r, d) for r, d, _ in pairs]))
        return out

    shared = {"q": torch.from_numpy(np.stack([cache.queries[d] for d in dims]))}
    train_t = {**shared, **pack("train")}
    val_t = {**shared, **pack("val")}

    n_slots = 1 + int(include_report) + int(include_rel)
    in_dim = n_slots * d_model
    params = {
        "p_q": torch.eye(d_model, dtype=torch.float64, requires_grad=True),
        "p_r": torch.eye(d_model, dtype=torch.float64, requires_grad=True),
    }
    gen = torch.Generator().manual_seed(seed + 1)
    if grader_config.head == "shared":
        w_shape: tuple[int, ...] = (N_CLASSES, in_dim)
        b_shape: tuple[int, ...] = (N_CLASSES,)
    else:
        w_shape = (len(dims), N_CLASSES, in_dim)
        b_shape = (len(dims), N_CLASSES)
    params["w"] = (0.01 * torch.randn(w_shape, generator=gen, dtype=torch.float64)).requires_grad_()
    params["b"] = torch.zeros(b_shape, dtype=torch.float64, requires_grad=True)
    optimizer = torch.optim.Adam(list(params.values()), lr=opt.learning_rate)

    n_train = len(train_t["labels"])
    n_val = len(val_t["labels"])
    best_val = float("inf")
    best_state = {k: v.detach().clone() for k, v in params.items()}
    log = []
    for epoch in range(1, opt.epochs + 1):
        running = 0.0
        n_batches = 0
        for batch in _epoch_batches(n_train, opt.batch_size, seed + 1, epoch):
            optimizer.zero_grad()
            loss = _grader_batch_loss(
                batch, train_t, params, grader_config, include_report, include_rel
            )
            loss.backward()
            optimizer.step()
            running += float(loss.detach())
            n_batches += 1
        with torch.no_grad():
            val_loss = float(
                _grader_batch_loss(
                    list(range(n_val)), val_t, params, grader_config,
                    include_report, include_rel,
                )
            )
        log.append(EpochStats(epoch, running / n_batches, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_state = {k: v.detach().clone() for k, v in params.items()}

    if grader_config.head == "shared":
        heads = GraderHeads(
            mode="shared",
            shared=GraderHead(best_state["w"].numpy(), best_state["b"].numpy()),
        )
    else:
        heads = GraderHeads(
            mode="per_dimension",
            per_dimension={
                d: GraderHead(best_state["w"][i].numpy(), best_state["b"][i].numpy())
                for d, i in dim_index.items()
            },
        )
    return GraderTrainResult(
        q_handle=with_projection(q_handle, best_state["p_q"].numpy()),
        r_handle=with_projection(r_handle, best_state["p_r"].numpy()),
        heads=heads,
        config=grader_config,
        log=tuple(log),
        include_report=include_report,
        include_rel=include_rel,
    )
