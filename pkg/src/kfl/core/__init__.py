"""Knowledge-aided federated learning engine."""

from .data import (DatasetShard, PartitionError, make_shards, matched_test_shards,
                   partition_non_iid, read_idx, write_idx)
from .knowledge import KnowledgeMatrix, aggregate_knowledge, compute_knowledge, knowledge_loss
from .model import LocalModel, forward, init_model, loss_and_grads, mlp_param_count, predict
from .training import (HyperParams, KFLState, empirical_loss, evaluate_accuracy, global_loss,
                       local_update, run_kfl_round)

__all__ = [
    "DatasetShard", "PartitionError", "make_shards", "matched_test_shards",
    "partition_non_iid", "read_idx", "write_idx", "KnowledgeMatrix", "aggregate_knowledge",
    "compute_knowledge", "knowledge_loss", "LocalModel", "forward", "init_model",
    "loss_and_grads", "mlp_param_count", "predict", "HyperParams", "KFLState",
    "empirical_loss", "evaluate_accuracy", "global_loss", "local_update", "run_kfl_round",
]
