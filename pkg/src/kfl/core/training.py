"""Local training with the knowledge-aided loss and the per-round protocol."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import DatasetShard
from .knowledge import KnowledgeMatrix, aggregate_knowledge, compute_knowledge
from .model import LocalModel, loss_and_grads, predict, predict_log_proba, extract


@dataclass(frozen=True)
class HyperParams:
    lr_extractor: float = 0.05
    lr_predictor: float = 0.05
    knowledge_weight: float = 0.1
    local_iters: int = 5
    momentum: float = 0.9

    def __post_init__(self):
        if not (self.lr_extractor >= 0 and self.lr_predictor >= 0):
            raise ValueError("learning rates must be nonnegative")
        if self.knowledge_weight < 0:
            raise ValueError("knowledge_weight must be >= 0")
        if self.local_iters < 1:
            raise ValueError("local_iters must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


def empirical_loss(model: LocalModel, shard: DatasetShard) -> float:
    logp = predict_log_proba(model, extract(model, shard.features))
    return float(-logp[np.arange(len(shard)), shard.labels].mean())


def global_loss(models: Sequence[LocalModel], shards: Sequence[DatasetShard]) -> float:
    """Sample-weighted average of the per-device empirical losses."""
    sizes = np.array([len(s) for s in shards], dtype=float)
    losses = np.array([empirical_loss(m, s) for m, s in zip(models, shards)])
    return float(np.dot(sizes, losses) / sizes.sum())


def local_update(model: LocalModel, shard: DatasetShard,
                 knowledge: Optional[KnowledgeMatrix], hp: HyperParams) -> LocalModel:
    """``hp.local_iters`` full-batch momentum-SGD steps on the knowledge-aided loss.

    The prototypes stay fixed for all local steps. Momentum buffers start
    from zero every call.
    """
    model = model.copy()
    protos = None
    if knowledge is not None and hp.knowledge_weight > 0:
        protos = knowledge.prototypes
    buf_ext = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.extractor]
    buf_pred = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.predictor]
    for step in range(hp.local_iters):
        loss, g_ext, g_pred = loss_and_grads(model, shard.features, shard.labels, protos,
                                             hp.knowledge_weight if protos is not None else 0.0)
        if not np.isfinite(loss.total) or not all(
                np.all(np.isfinite(g)) for layer in g_ext + g_pred for g in layer):
            raise FloatingPointError(
                f"non-finite loss/gradient at local step {step}: "
                f"empirical={loss.empirical} knowledge={loss.knowledge}")
        _momentum_step(model.extractor, g_ext, buf_ext, hp.lr_extractor, hp.momentum)
        _momentum_step(model.predictor, g_pred, buf_pred, hp.lr_predictor, hp.momentum)
    return model


def _momentum_step(params, grads, bufs, lr: float, momentum: float) -> None:
    for (w, b), (gw, gb), (bw, bb) in zip(params, grads, bufs):
        bw *= momentum
        bw += gw
        bb *= momentum
        bb += gb
        w -= lr * bw
        b -= lr * bb


def evaluate_accuracy(models: Sequence[LocalModel], test_shards: Sequence[DatasetShard]) -> float:
    """Pooled accuracy, each device scored on its own test set with its own model."""
    correct = 0
    total = 0
    for model, shard in zip(models, test_shards):
        if len(shard) == 0:
            continue
        correct += int((predict(model, shard.features) == shard.labels).sum())
        total += len(shard)
    return correct / total if total else 0.0


@dataclass
class KFLState:
    models: list[LocalModel]
    knowledge: Optional[KnowledgeMatrix] = None
    round: int = 0
    uploads: dict[int, KnowledgeMatrix] = field(default_factory=dict)


def run_kfl_round(state: KFLState, shards: Sequence[DatasetShard], scheduled: Sequence[int],
                  hp: HyperParams) -> KFLState:
    """Broadcast, local training, knowledge upload and aggregation for one round.

    Before the first aggregation there are no prototypes, so round-0 training
    is plain cross-entropy.
    """
    models = list(state.models)
    uploads = {}
    for k in sorted(scheduled):
        models[k] = local_update(models[k], shards[k], state.knowledge, hp)
        uploads[k] = compute_knowledge(models[k], shards[k])
    knowledge = state.knowledge
    if uploads:
        knowledge = aggregate_knowledge([uploads[k] for k in sorted(uploads)], state.knowledge)
    return KFLState(models, knowledge, state.round + 1, uploads)
