"""Self-alignment pretraining: batch sampling, online hard-triplet mining,
the Multi-Similarity loss with its analytic gradient, and the SGD loop.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from xlsap.core import NameRecord, TrainConfig
from xlsap.encoder import (
    EncoderParams,
    apply_sgd,
    encode_batch,
    encode_batch_backward,
    init_params,
)
from xlsap.rng import SplitMix64

logger = logging.getLogger(__name__)

SAMPLER_STREAM = 1


class NumericError(ArithmeticError):
    pass


class DatasetTooSmall(ValueError):
    pass


def group_by_label(records: Sequence[NameRecord]) -> dict[str, list[NameRecord]]:
    """Label -> records, in first-appearance order of labels and of names."""
    groups: dict[str, list[NameRecord]] = {}
    for rec in records:
        groups.setdefault(rec.label, []).append(rec)
    return groups


@dataclass
class MiniBatch:
    records: list[NameRecord]

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.records]

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.records]


def sample_batch(
    groups: Mapping[str, Sequence[NameRecord]],
    rng: SplitMix64,
    batch_size: int,
    names_per_class: int,
) -> MiniBatch:
    """Class-balanced batch: ``batch_size / names_per_class`` labels drawn
    uniformly without replacement, then ``names_per_class`` names per label.

    Names are drawn without replacement unless the class is too small, in
    which case they are drawn with replacement.
    """
    if batch_size % names_per_class:
        raise ValueError("batch_size must be a multiple of names_per_class")
    n_classes = batch_size // names_per_class
    labels = list(groups)
    if len(labels) < n_classes:
        raise DatasetTooSmall(
            f"need {n_classes} labels for a batch of {batch_size}, dataset has {len(labels)}"
        )
    records = []
    for li in rng.sample(len(labels), n_classes):
        members = groups[labels[li]]
        if len(members) >= names_per_class:
            picks = rng.sample(len(members), names_per_class)
        else:
            picks = [rng.randbelow(len(members)) for _ in range(names_per_class)]
        records.extend(members[j] for j in picks)
    return MiniBatch(records)


def similarity_matrix(embeddings: np.ndarray) -> np.ndarray:
    embeddings = np.asarray(embeddings, dtype=np.float64)
    return embeddings @ embeddings.T


def distances_from_similarity(sim: np.ndarray) -> np.ndarray:
    """Euclidean distance between unit vectors: sqrt(2 - 2 cos)."""
    return np.sqrt(np.maximum(0.0, 2.0 - 2.0 * sim))


def _label_ids(labels: Sequence) -> np.ndarray:
    index: dict = {}
    return np.array([index.setdefault(lab, len(index)) for lab in labels], dtype=np.int64)


def mine_triplets(sim: np.ndarray, labels: Sequence, margin: float) -> np.ndarray:
    """All (a, p, n) with ``d(a,p) + margin >= d(a,n)``, lexicographically ordered.

    Returns an int array of shape (T, 3).
    """
    sim = np.asarray(sim, dtype=np.float64)
    ids = _label_ids(labels)
    n = len(ids)
    dist = distances_from_similarity(sim)
    same = ids[:, None] == ids[None, :]
    found = []
    for a in range(n):
        pos = np.flatnonzero(same[a])
        pos = pos[pos != a]
        neg = np.flatnonzero(~same[a])
        if not len(pos) or not len(neg):
            continue
        keep = (dist[a, pos][:, None] + margin) >= dist[a, neg][None, :]
        pi, ni = np.nonzero(keep)
        if len(pi):
            found.append(np.column_stack([np.full(len(pi), a), pos[pi], neg[ni]]))
    if not found:
        return np.zeros((0, 3), dtype=np.int64)
    return np.concatenate(found).astype(np.int64)


@dataclass
class PairSets:
    """Per-anchor positive/negative index sets, stored as boolean masks."""

    positive: np.ndarray
    negative: np.ndarray

    @property
    def size(self) -> int:
        return self.positive.shape[0]

    def positives(self, i: int) -> set[int]:
        return set(np.flatnonzero(self.positive[i]).tolist())

    def negatives(self, i: int) -> set[int]:
        return set(np.flatnonzero(self.negative[i]).tolist())

    @classmethod
    def from_sets(cls, n: int, positives: Mapping[int, set], negatives: Mapping[int, set]) -> "PairSets":
        pos = np.zeros((n, n), dtype=bool)
        neg = np.zeros((n, n), dtype=bool)
        for i, js in positives.items():
            pos[i, list(js)] = True
        for i, js in negatives.items():
            neg[i, list(js)] = True
        return cls(pos, neg)


def collect_pairs(triplets: np.ndarray, batch_size: int) -> PairSets:
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    pos = np.zeros((batch_size, batch_size), dtype=bool)
    neg = np.zeros((batch_size, batch_size), dtype=bool)
    pos[triplets[:, 0], triplets[:, 1]] = True
    neg[triplets[:, 0], triplets[:, 2]] = True
    return PairSets(pos, neg)


def _masked_log1p_sum_exp(x: np.ndarray, mask: np.ndarray):
    """Row-wise log(1 + sum_{mask} exp(x)) and the softmax weights
    exp(x) / (1 + sum exp(x)) on the masked entries, computed with a shift."""
    shift = np.maximum(0.0, np.max(np.where(mask, x, -np.inf), axis=1, initial=-np.inf))
    shift = np.where(np.isfinite(shift), shift, 0.0)
    with np.errstate(under="ignore"):
        e = np.where(mask, np.exp(np.where(mask, x, 0.0) - shift[:, None]), 0.0)
    total = e.sum(axis=1)
    base = np.exp(-shift)
    # log1p keeps precision when nothing is large and total is tiny.
    value = np.where(shift == 0.0, np.log1p(total), shift + np.log(base + total))
    weights = e / (base + total)[:, None]
    return value, weights


def ms_loss_and_grad(sim: np.ndarray, pairs: PairSets, alpha: float, beta: float, epsilon: float):
    sim = np.asarray(sim, dtype=np.float64)
    n = sim.shape[0]
    if n == 0:
        return 0.0, np.zeros((0, 0))
    neg_val, neg_w = _masked_log1p_sum_exp(alpha * (sim - epsilon), pairs.negative)
    pos_val, pos_w = _masked_log1p_sum_exp(-beta * (sim - epsilon), pairs.positive)
    loss = float(np.sum(neg_val / alpha + pos_val / beta) / n)
    grad = (neg_w - pos_w) / n
    if not math.isfinite(loss) or not np.isfinite(grad).all():
        raise NumericError("Multi-Similarity loss is not finite")
    return loss, grad


def ms_loss(sim: np.ndarray, pairs: PairSets, alpha: float, beta: float, epsilon: float) -> float:
    """Multi-Similarity loss averaged over every anchor in the batch.

    Anchors with no selected pairs contribute zero but still count in the
    denominator.
    """
    return ms_loss_and_grad(sim, pairs, alpha, beta, epsilon)[0]


def ms_loss_grad(sim: np.ndarray, pairs: PairSets, alpha: float, beta: float, epsilon: float) -> np.ndarray:
    """dL/dS, treating every entry of S as an independent variable."""
    return ms_loss_and_grad(sim, pairs, alpha, beta, epsilon)[1]


def batch_loss_and_grad(params: EncoderParams, names: Sequence[str], labels: Sequence, config: TrainConfig):
    """Loss of one batch and its gradient w.r.t. the encoder parameters.

    Mining is a selection step and is not differentiated through. Returns
    ``(loss, n_triplets, ParamGrad | None)``; the gradient is None when no
    triplet is mined.
    """
    emb = encode_batch(params, names)
    if not np.isfinite(emb).all():
        raise NumericError("encoder produced non-finite embeddings")
    sim = similarity_matrix(emb)
    triplets = mine_triplets(sim, labels, config.margin_lambda)
    if not len(triplets):
        return 0.0, 0, None
    pairs = collect_pairs(triplets, len(names))
    loss, g = ms_loss_and_grad(sim, pairs, config.alpha, config.beta, config.epsilon)
    grad_emb = (g + g.T) @ emb
    return loss, len(triplets), encode_batch_backward(params, names, grad_emb)


@dataclass
class TraceRow:
    step: int
    loss: float
    n_triplets: int


@dataclass
class TrainResult:
    params: EncoderParams
    trace: list[TraceRow] = field(default_factory=list)

    def trace_csv(self) -> str:
        lines = ["step,loss,n_triplets"]
        lines += [f"{r.step},{r.loss!r},{r.n_triplets}" for r in self.trace]
        return "\n".join(lines) + "\n"


def steps_per_epoch(n_classes: int, config: TrainConfig) -> int:
    return -(-n_classes * config.names_per_class // config.batch_size)


def sampler_rng(config: TrainConfig) -> SplitMix64:
    return SplitMix64(config.seed).derive(SAMPLER_STREAM)


def train(
    dataset: Sequence[NameRecord],
    config: TrainConfig,
    params: EncoderParams | None = None,
    rng: SplitMix64 | None = None,
    step_offset: int = 0,
) -> TrainResult:
    """Run SAP for ``config.epochs`` epochs and return the updated parameters.

    The input parameters are not modified. Steps with no mined triplet are
    recorded with loss 0 and leave the parameters untouched.
    """
    params = init_params(config) if params is None else params.copy()
    rng = sampler_rng(config) if rng is None else rng
    groups = group_by_label(dataset)
    n_steps = config.epochs * steps_per_epoch(len(groups), config)
    result = TrainResult(params)
    for step in range(step_offset, step_offset + n_steps):
        batch = sample_batch(groups, rng, config.batch_size, config.names_per_class)
        try:
            loss, n_trip, grad = batch_loss_and_grad(params, batch.names, batch.labels, config)
        except NumericError as exc:
            raise NumericError(f"non-finite loss at step {step}") from exc
        if grad is not None:
            apply_sgd(params, grad, config.learning_rate)
        result.trace.append(TraceRow(step, loss, n_trip))
        logger.debug("step %d loss %.6f triplets %d", step, loss, n_trip)
    return result


def train_sequential(
    stage1: Sequence[NameRecord],
    stage2: Sequence[NameRecord],
    config: TrainConfig,
    params: EncoderParams | None = None,
    stage2_config: TrainConfig | None = None,
) -> TrainResult:
    """Synonym training followed by continued training on a second dataset
    (typically pseudo-labelled translation pairs). Both stages share one
    sampling stream, so an empty stage is a no-op."""
    rng = sampler_rng(config)
    first = train(stage1, config, params, rng)
    second = train(stage2, stage2_config or config, first.params, rng, step_offset=len(first.trace))
    return TrainResult(second.params, first.trace + second.trace)
