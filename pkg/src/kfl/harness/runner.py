"""End-to-end experiment loop.

Every round: draw channel gains, pick the scheduled set, allocate bandwidth
and power, train the scheduled devices, aggregate their knowledge, update the
energy queues and evaluate. All randomness comes from numpy generators keyed
on the experiment seed plus a fixed stream tag, so a (seed, config) pair fixes
every output byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..core.data import DatasetShard, make_shards, matched_test_shards, partition_non_iid
from ..core.model import LocalModel, init_model
from ..core.training import KFLState, evaluate_accuracy, run_kfl_round
from ..scheduler import (
    RoundDecision,
    SchedulerConfig,
    VirtualQueueState,
    drift_plus_penalty,
    fixed_set_decision,
    is_deliverable,
    myopic_schedule,
    pattern_schedule,
    round_robin_schedule,
    schedule_round,
    update_queues,
)
from ..system_model import ChannelModel, DeviceProfile, PayloadSpec, draw_channel
from .config import ExperimentConfig
from .datasets import gen_synthetic, load_mnist
from .metrics import MetricsRecord, emit_metrics

# stream tags for np.random.default_rng([seed, tag, ...])
_DATA, _PLACE, _ARCH, _INIT = 0x64617461, 0x706C6163, 0x61726368, 0x696E6974


class RoundError(RuntimeError):
    """A module error raised inside the round loop, tagged with the round index."""

    def __init__(self, round_: int, cause: Exception):
        super().__init__(f"round {round_}: {type(cause).__name__}: {cause}")
        self.round = round_
        self.cause = cause


@dataclass
class Population:
    profiles: list[DeviceProfile]
    shards: list[DatasetShard]
    test_shards: list[DatasetShard]
    models: list[LocalModel]


@dataclass
class ExperimentResult:
    records: list[MetricsRecord]
    state: KFLState
    queues: VirtualQueueState
    queue_trace: np.ndarray  # (T+1, K), row t is the backlog before round t
    energy_trace: np.ndarray  # (T, K), zeros for unscheduled devices
    decisions: list[RoundDecision] = field(default_factory=list)
    initial_accuracy: float = math.nan


def channel_model(cfg: ExperimentConfig) -> ChannelModel:
    ch = cfg.channel
    return ChannelModel(path_loss_const=ch.path_loss_const, ref_distance=ch.ref_distance,
                        path_loss_exp=ch.path_loss_exp, noise_psd=ch.noise_psd,
                        bandwidth_total=ch.bandwidth_total)


def payload_spec(cfg: ExperimentConfig, model_params: int = 0) -> PayloadSpec:
    return PayloadSpec.for_knowledge(cfg.num_classes, cfg.model.feature_dim,
                                     cfg.model.bits_per_param, model_params)


def scheduler_config(cfg: ExperimentConfig) -> SchedulerConfig:
    return SchedulerConfig(tradeoff_v=cfg.tradeoff_v, horizon=cfg.horizon,
                           deadline=cfg.deadline, local_iters=cfg.hp.local_iters,
                           window=cfg.round_robin_window)


def _load_data(cfg: ExperimentConfig, rng: np.random.Generator):
    if cfg.dataset == "synthetic":
        d = cfg.data
        X, y, means = gen_synthetic(cfg.num_classes, d.dim, d.per_class, d.spread, rng)
        Xt, yt, _ = gen_synthetic(cfg.num_classes, d.dim, d.test_per_class, d.spread, rng, means)
        return X, y, Xt, yt
    X, y = load_mnist(cfg.data.mnist_dir, "train")
    Xt, yt = load_mnist(cfg.data.mnist_dir, "test")
    return X, y, Xt, yt


def build_population(cfg: ExperimentConfig) -> Population:
    rng = np.random.default_rng([cfg.seed, _DATA])
    X, y, Xt, yt = _load_data(cfg, rng)
    parts = partition_non_iid(y, cfg.num_devices, cfg.classes_per_device, cfg.num_classes, rng)
    shards = make_shards(X, y, parts, cfg.num_classes)
    tests = matched_test_shards(Xt, yt, shards, cfg.data.test_per_device, rng)

    dev = cfg.devices
    profiles, models = [], []
    for k in range(cfg.num_devices):
        arch_rng = np.random.default_rng([cfg.seed, _ARCH, k])
        hidden = cfg.model.hidden_choices[int(arch_rng.integers(len(cfg.model.hidden_choices)))]
        model = init_model(X.shape[1], hidden, cfg.model.feature_dim, cfg.num_classes,
                           np.random.default_rng([cfg.seed, _INIT, k]))
        place = np.random.default_rng([cfg.seed, _PLACE, k])
        distance = max(dev.cell_radius * math.sqrt(place.uniform()), cfg.channel.ref_distance)
        freq = float(dev.cpu_freqs[int(place.integers(len(dev.cpu_freqs)))])
        profiles.append(DeviceProfile(
            id=k, samples_per_class=shards[k].per_class_counts, cpu_freq=freq,
            flops_per_sample=dev.flops_per_param * model.num_params, max_power=dev.max_power,
            energy_budget=dev.energy_per_round * cfg.horizon, distance=distance,
            flops_per_cycle=dev.flops_per_cycle, power_coeff=dev.power_coeff))
        models.append(model)
    return Population(profiles, shards, tests, models)


Override = Callable[[int, Sequence[int]], Sequence[int]]


def run_experiment(cfg: ExperimentConfig, override: Optional[Override] = None,
                   population: Optional[Population] = None) -> ExperimentResult:
    """Run ``cfg.horizon`` rounds and return the per-round records and final state.

    ``override(round, deliverable_ids)`` replaces the configured scheduler
    with an externally chosen set; bandwidth is still allocated for it.
    Metrics are written to ``cfg.output_path`` when set.
    """
    pop = population or build_population(cfg)
    profiles = pop.profiles
    k_total = len(profiles)
    model = channel_model(cfg)
    sched = scheduler_config(cfg)
    payload = payload_spec(cfg)
    sizes = {p.id: p.total_samples for p in profiles}

    state = KFLState(list(pop.models))
    queues = VirtualQueueState.initial(k_total)
    spent = np.zeros(k_total)
    queue_trace = np.zeros((cfg.horizon + 1, k_total))
    energy_trace = np.zeros((cfg.horizon, k_total))
    records, decisions = [], []
    cursor = 0
    initial_accuracy = evaluate_accuracy(state.models, pop.test_shards)

    for t in range(cfg.horizon):
        try:
            channel = draw_channel(model, profiles, t, cfg.seed)
            if override is not None:
                ready = [p.id for i, p in enumerate(profiles)
                         if is_deliverable(p, channel.gains[i], sched, payload, model)]
                chosen = [profiles[k] for k in sorted(override(t, ready))]
                decision = fixed_set_decision(chosen, channel, profiles, sched, payload, model)
            elif cfg.scheduler_kind == "proposed":
                decision = schedule_round(queues, profiles, channel, sched, payload, model)
            elif cfg.scheduler_kind == "round_robin":
                decision, cursor = round_robin_schedule(profiles, channel, sched, payload,
                                                        model, spent, cursor)
            elif cfg.scheduler_kind == "myopic":
                decision = myopic_schedule(profiles, channel, sched, payload, model, spent, t)
            elif cfg.scheduler_kind == "pattern":
                ready = [p.id for i, p in enumerate(profiles)
                         if is_deliverable(p, channel.gains[i], sched, payload, model)]
                picked = pattern_schedule(cfg.pattern.name, t, sched, ready, cfg.seed,
                                          cfg.pattern.mean, cfg.pattern.peak)
                decision = fixed_set_decision([profiles[k] for k in picked], channel,
                                              profiles, sched, payload, model)
            else:  # full participation
                decision = fixed_set_decision(profiles, channel, profiles, sched, payload, model)

            q_now = {p.id: float(queues.backlogs[i]) for i, p in enumerate(profiles)}
            if cfg.scheduler_kind == "proposed" and override is None:
                objective = decision.objective
            else:
                objective = drift_plus_penalty(decision.scheduled, decision.per_device_energy,
                                               q_now, sizes, sched, t)

            state = run_kfl_round(state, pop.shards, decision.scheduled, cfg.hp)
            queue_trace[t] = queues.backlogs
            queues = update_queues(queues, decision, profiles, cfg.horizon)
            for k, e in decision.per_device_energy.items():
                energy_trace[t, k] = e
                spent[k] += e

            last = t == cfg.horizon - 1
            acc = (evaluate_accuracy(state.models, pop.test_shards)
                   if last or t % cfg.eval_interval == 0 else math.nan)
        except Exception as exc:  # noqa: BLE001 - re-raised with the round index
            raise RoundError(t, exc) from exc

        records.append(MetricsRecord(
            round=t, test_accuracy=acc, scheduled_count=len(decision.scheduled),
            scheduled_data_volume=sum(sizes[k] for k in decision.scheduled),
            per_device_cumulative_energy=spent.copy(),
            max_queue=float(queues.backlogs.max()), dpp_objective=float(objective),
            bytes_uploaded=len(decision.scheduled) * payload.bits // 8))
        decisions.append(decision)
    queue_trace[cfg.horizon] = queues.backlogs

    if cfg.output_path:
        emit_metrics(records, cfg.output_path)
    return ExperimentResult(records, state, queues, queue_trace, energy_trace, decisions,
                            initial_accuracy)
