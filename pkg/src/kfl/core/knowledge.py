"""Class prototypes ("knowledge"): per-device computation and server aggregation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import DatasetShard
from .model import LocalModel, extract


@dataclass
class KnowledgeMatrix:
    """``(C, p)`` prototypes with the sample counts behind each row.

    Rows of classes never observed are NaN, never zero.
    """

    prototypes: np.ndarray
    class_counts: np.ndarray

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.prototypes).any(axis=1)

    @property
    def num_params(self) -> int:
        return self.prototypes.size


def compute_knowledge(model: LocalModel, shard: DatasetShard) -> KnowledgeMatrix:
    feats = extract(model, shard.features)
    counts = shard.per_class_counts
    protos = np.full((shard.num_classes, feats.shape[1]), np.nan)
    for c in np.flatnonzero(counts):
        protos[c] = feats[shard.labels == c].mean(axis=0)
    return KnowledgeMatrix(protos, counts)


def aggregate_knowledge(uploads: Sequence[KnowledgeMatrix],
                        previous: Optional[KnowledgeMatrix] = None) -> KnowledgeMatrix:
    """Count-weighted mean of the uploaded prototypes, class by class.

    Classes no uploader holds keep their ``previous`` row. Summation runs in
    the order given, so callers pass uploads in device-id order.
    """
    if not uploads:
        if previous is None:
            raise ValueError("nothing to aggregate")
        return previous
    num_classes, dim = uploads[0].prototypes.shape
    weighted = np.zeros((num_classes, dim))
    totals = np.zeros(num_classes, dtype=np.int64)
    for up in uploads:
        have = up.class_counts > 0
        weighted[have] += up.class_counts[have, None] * up.prototypes[have]
        totals += np.where(have, up.class_counts, 0)
    protos = np.full((num_classes, dim), np.nan)
    seen = totals > 0
    protos[seen] = weighted[seen] / totals[seen, None]
    counts = totals.copy()
    if previous is not None:
        stale = ~seen
        protos[stale] = previous.prototypes[stale]
        counts[stale] = previous.class_counts[stale]
    return KnowledgeMatrix(protos, counts)


def knowledge_loss(model: LocalModel, shard: DatasetShard, knowledge: KnowledgeMatrix,
                   return_missing: bool = False):
    """Mean half squared distance between each feature and its class prototype.

    Samples whose class has no prototype add zero; with ``return_missing``
    their number is returned alongside the loss.
    """
    feats = extract(model, shard.features)
    targets = knowledge.prototypes[shard.labels]
    have = ~np.isnan(targets).any(axis=1)
    diff = feats[have] - targets[have]
    value = float(0.5 * np.sum(diff * diff) / len(shard))
    if return_missing:
        return value, int((~have).sum())
    return value
