"""Online device scheduling under long-term energy budgets.

Each device carries a virtual energy queue that grows when it spends more than
its per-round share of the budget. Every round the scheduler ranks devices by
an estimated drift-plus-penalty contribution, grows the scheduled set along
that ranking, allocates bandwidth for every prefix and keeps the prefix with
the smallest drift-plus-penalty value. Round-robin, myopic-budget and fixed
cohort-size pattern schedulers are provided as baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .allocation import AllocationResult, allocate_bandwidth, min_bandwidth_share
from .system_model import (
    ChannelDraw,
    ChannelModel,
    DeviceProfile,
    PayloadSpec,
    compute_energy,
    upload_energy,
    upload_window,
)

PATTERNS = ("uniform", "ascend", "descend")


@dataclass
class VirtualQueueState:
    backlogs: np.ndarray
    round: int = 0

    @classmethod
    def initial(cls, num_devices: int) -> "VirtualQueueState":
        return cls(np.zeros(num_devices), 0)

    def __post_init__(self):
        self.backlogs = np.asarray(self.backlogs, dtype=float)
        if np.any(self.backlogs < 0):
            raise ValueError("queue backlogs must be nonnegative")


def default_round_weights(horizon: int) -> np.ndarray:
    """Round weights ``1/(t+1)``: early rounds count more."""
    return 1.0 / np.arange(1, horizon + 1, dtype=float)


@dataclass
class SchedulerConfig:
    tradeoff_v: float
    horizon: int
    deadline: float
    local_iters: int
    round_weights: Optional[np.ndarray] = None
    window: int = 5  # round-robin cohort size

    def __post_init__(self):
        if self.tradeoff_v < 0:
            raise ValueError("tradeoff_v must be >= 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.round_weights is None:
            self.round_weights = default_round_weights(self.horizon)
        self.round_weights = np.asarray(self.round_weights, dtype=float)
        if len(self.round_weights) != self.horizon or np.any(self.round_weights <= 0):
            raise ValueError("round_weights must hold one positive weight per round")

    def gamma(self, round_: int) -> float:
        return float(self.round_weights[round_])


@dataclass
class RoundDecision:
    scheduled: tuple[int, ...]
    allocation: AllocationResult
    objective: float = 0.0
    per_device_energy: dict[int, float] = field(default_factory=dict)
    candidates: list[tuple[tuple[int, ...], float]] = field(default_factory=list)

    @classmethod
    def empty(cls) -> "RoundDecision":
        return cls((), AllocationResult())


def update_queues(state: VirtualQueueState, decision: RoundDecision,
                  profiles: Sequence[DeviceProfile], horizon: int) -> VirtualQueueState:
    backlogs = state.backlogs.copy()
    for i, prof in enumerate(profiles):
        spent = decision.per_device_energy.get(prof.id, 0.0)
        backlogs[i] = max(backlogs[i] + spent - prof.energy_budget / horizon, 0.0)
    return VirtualQueueState(backlogs, state.round + 1)


def drift_plus_penalty(scheduled: Sequence[int], energies: Mapping[int, float],
                       queues: Mapping[int, float], data_sizes: Mapping[int, int],
                       config: SchedulerConfig, round_: int) -> float:
    penalty = -config.tradeoff_v * config.gamma(round_) * sum(data_sizes[k] for k in scheduled)
    return penalty + sum(queues[k] * energies[k] for k in scheduled)


def is_deliverable(profile: DeviceProfile, gain: float, config: SchedulerConfig,
                   payload: PayloadSpec, model: ChannelModel) -> bool:
    """Training fits in the deadline and the upload fits using the whole band at full power."""
    if upload_window(profile, config.deadline, config.local_iters) <= 0:
        return False
    return min_bandwidth_share(profile, gain, config.deadline, payload, model,
                               config.local_iters) is not None


def estimate_energy(profile: DeviceProfile, gain: float, num_devices: int,
                    config: SchedulerConfig, payload: PayloadSpec,
                    model: ChannelModel) -> float:
    """Round energy at an equal ``1/K`` share, uploading for the whole remaining window.

    The power limit is not enforced here; allocation does that.
    """
    window = upload_window(profile, config.deadline, config.local_iters)
    return (compute_energy(profile, config.local_iters)
            + upload_energy(1.0 / num_devices, window, gain, payload, model))


def rank_devices(profiles: Sequence[DeviceProfile], queues: Sequence[float],
                 estimates: Sequence[float], config: SchedulerConfig,
                 round_: int) -> list[int]:
    """Device ids sorted ascending by ``-V*gamma*D_k + q_k*E_k``; ties by id."""
    vg = config.tradeoff_v * config.gamma(round_)
    keyed = [(-vg * p.total_samples + q * e, p.id) for p, q, e in zip(profiles, queues, estimates)]
    return [k for _, k in sorted(keyed)]


def schedule_round(state: VirtualQueueState, profiles: Sequence[DeviceProfile],
                   channel: ChannelDraw, config: SchedulerConfig, payload: PayloadSpec,
                   model: ChannelModel) -> RoundDecision:
    t = state.round
    vg = config.tradeoff_v * config.gamma(t)
    index = {p.id: i for i, p in enumerate(profiles)}
    feasible = [p for i, p in enumerate(profiles)
                if is_deliverable(p, channel.gains[i], config, payload, model)]
    if not feasible:
        return RoundDecision.empty()

    queues = {p.id: float(state.backlogs[index[p.id]]) for p in profiles}
    gains = {p.id: float(channel.gains[index[p.id]]) for p in profiles}
    estimates = [estimate_energy(p, gains[p.id], len(profiles), config, payload, model)
                 for p in feasible]
    order = rank_devices(feasible, [queues[p.id] for p in feasible], estimates, config, t)

    by_id = {p.id: p for p in profiles}
    best = RoundDecision.empty()
    candidates: list[tuple[tuple[int, ...], float]] = []
    prefix: list[int] = []
    for k in order:
        prefix.append(k)
        members = [by_id[j] for j in prefix]
        alloc = allocate_bandwidth(members, [queues[j] for j in prefix],
                                   [gains[j] for j in prefix], config.deadline, payload,
                                   model, config.local_iters)
        if not alloc.feasible:
            break  # larger prefixes only tighten the band
        value = drift_plus_penalty(prefix, alloc.energies, queues,
                                   {j: by_id[j].total_samples for j in prefix}, config, t)
        if -vg * by_id[k].total_samples + queues[k] * alloc.energies[k] > 0:
            break
        candidates.append((tuple(prefix), value))
        if value < best.objective:
            best = RoundDecision(tuple(prefix), alloc, value, dict(alloc.energies))
    best.candidates = candidates
    return best


def _allocate_unit(members: Sequence[DeviceProfile], gains: Mapping[int, float],
                   config: SchedulerConfig, payload: PayloadSpec,
                   model: ChannelModel) -> AllocationResult:
    return allocate_bandwidth(members, [1.0] * len(members), [gains[p.id] for p in members],
                              config.deadline, payload, model, config.local_iters)


def _decision(members: Sequence[DeviceProfile], alloc: AllocationResult) -> RoundDecision:
    if not members:
        return RoundDecision.empty()
    return RoundDecision(tuple(p.id for p in members), alloc,
                         per_device_energy=dict(alloc.energies))


def _drop_until_feasible(members: list[DeviceProfile], gains: Mapping[int, float],
                         config: SchedulerConfig, payload: PayloadSpec, model: ChannelModel,
                         budgets: Mapping[int, float]) -> tuple[list[DeviceProfile], AllocationResult]:
    """Shrink ``members`` until the allocation is feasible and each fits its energy budget."""
    while members:
        alloc = _allocate_unit(members, gains, config, payload, model)
        if not alloc.feasible:
            if alloc.min_shares:
                worst = max(members, key=lambda p: (alloc.min_shares[p.id], p.id))
            else:
                worst = members[-1]
            members = [p for p in members if p is not worst]
            continue
        over = [p for p in members if alloc.energies[p.id] > budgets[p.id]]
        if not over:
            return members, alloc
        members = [p for p in members if p not in over]
    return [], AllocationResult()


def fixed_set_decision(members: Sequence[DeviceProfile], channel: ChannelDraw,
                       profiles: Sequence[DeviceProfile], config: SchedulerConfig,
                       payload: PayloadSpec, model: ChannelModel) -> RoundDecision:
    """Allocate for an externally chosen set, dropping devices until the band suffices."""
    gains = {p.id: float(channel.gains[i]) for i, p in enumerate(profiles)}
    members = [p for p in members if is_deliverable(p, gains[p.id], config, payload, model)]
    unlimited = {p.id: math.inf for p in members}
    members, alloc = _drop_until_feasible(members, gains, config, payload, model, unlimited)
    return _decision(members, alloc)


def round_robin_schedule(profiles: Sequence[DeviceProfile], channel: ChannelDraw,
                         config: SchedulerConfig, payload: PayloadSpec, model: ChannelModel,
                         spent: Sequence[float], cursor: int) -> tuple[RoundDecision, int]:
    """Next ``config.window`` devices in cyclic id order that can afford this round.

    Returns the decision and the cursor for the following round.
    """
    n = len(profiles)
    gains = {p.id: float(channel.gains[i]) for i, p in enumerate(profiles)}
    remaining = {p.id: p.energy_budget - spent[i] for i, p in enumerate(profiles)}
    chosen: list[DeviceProfile] = []
    pos = cursor % n if n else 0
    scanned = 0
    while scanned < n and len(chosen) < config.window:
        prof = profiles[pos]
        pos = (pos + 1) % n
        scanned += 1
        if not is_deliverable(prof, gains[prof.id], config, payload, model):
            continue
        est = estimate_energy(prof, gains[prof.id], config.window, config, payload, model)
        if est <= remaining[prof.id]:
            chosen.append(prof)
    members, alloc = _drop_until_feasible(chosen, gains, config, payload, model, remaining)
    return _decision(members, alloc), pos


def myopic_budgets(profiles: Sequence[DeviceProfile], spent: Sequence[float],
                   horizon: int, round_: int) -> dict[int, float]:
    """Per-round allowance: remaining energy over the remaining number of rounds (+1)."""
    return {p.id: (p.energy_budget - spent[i]) / (horizon - round_ + 1)
            for i, p in enumerate(profiles)}


def myopic_schedule(profiles: Sequence[DeviceProfile], channel: ChannelDraw,
                    config: SchedulerConfig, payload: PayloadSpec, model: ChannelModel,
                    spent: Sequence[float], round_: int) -> RoundDecision:
    gains = {p.id: float(channel.gains[i]) for i, p in enumerate(profiles)}
    budgets = myopic_budgets(profiles, spent, config.horizon, round_)
    members = [p for p in profiles if is_deliverable(p, gains[p.id], config, payload, model)]
    members, alloc = _drop_until_feasible(members, gains, config, payload, model, budgets)
    return _decision(members, alloc)


def pattern_sizes(pattern: str, horizon: int, mean: int = 10, peak: int = 20) -> list[int]:
    """Per-round cohort sizes; all three patterns schedule ``mean * horizon`` in total.

    ``descend`` starts at ``peak`` and ends at 1 with the interior rounds
    apportioned along a straight line; ``ascend`` is its reverse.
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")
    if pattern == "uniform" or horizon == 1:
        return [mean] * horizon
    total = mean * horizon
    if horizon == 2:
        sizes = [total - 1, 1]
    else:
        interior_total = total - peak - 1
        ramp = np.linspace(peak, 1, horizon)[1:-1]
        scaled = ramp * interior_total / ramp.sum()
        cum = np.rint(np.cumsum(scaled)).astype(int)
        interior = np.diff(np.concatenate([[0], cum])).tolist()
        sizes = [peak] + interior + [1]
    if pattern == "ascend":
        sizes = sizes[::-1]
    return [int(s) for s in sizes]


def pattern_schedule(pattern: str, round_: int, config: SchedulerConfig,
                     candidates: Sequence[int], seed: int, mean: int = 10,
                     peak: int = 20) -> tuple[int, ...]:
    """Uniformly random subset of ``candidates`` with the pattern's size for this round."""
    size = pattern_sizes(pattern, config.horizon, mean, peak)[round_]
    size = min(size, len(candidates))
    rng = np.random.default_rng([seed, 0x70617474, round_])
    picked = rng.choice(len(candidates), size=size, replace=False)
    return tuple(sorted(candidates[i] for i in picked))


@dataclass
class BoundReport:
    consumed: float
    bound: float
    budget_total: float
    zeta: np.ndarray
    zeta0: float

    @property
    def holds(self) -> bool:
        return self.consumed <= self.bound


def energy_bound_report(energy_trace: np.ndarray, config: SchedulerConfig,
                 profiles: Sequence[DeviceProfile]) -> BoundReport:
    """Long-term energy bound of the drift-plus-penalty scheduler.

    ``energy_trace`` is T x K with zeros for unscheduled devices. The bound
    is total budget plus ``sqrt(2K(T*zeta0 + V*sum_t gamma_t*D))``, where
    ``zeta_k`` is the largest per-round deviation from the even budget split.
    """
    trace = np.asarray(energy_trace, dtype=float)
    horizon, k = trace.shape
    budgets = np.array([p.energy_budget for p in profiles])
    zeta = np.abs(trace - budgets / horizon).max(axis=0)
    zeta0 = 0.5 * float(np.sum(zeta ** 2))
    total_data = sum(p.total_samples for p in profiles)
    gamma_sum = float(np.sum(config.round_weights[:horizon]))
    slack = math.sqrt(2 * k * (horizon * zeta0 + config.tradeoff_v * gamma_sum * total_data))
    return BoundReport(consumed=float(trace.sum()), bound=float(budgets.sum() + slack),
                       budget_total=float(budgets.sum()), zeta=zeta, zeta0=zeta0)
