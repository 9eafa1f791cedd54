"""Device profiles, channel realizations and the per-round latency/energy model.

All quantities are SI: seconds, joules, watts, hertz, metres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LN2 = math.log(2.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass
class DeviceProfile:
    """Static parameters of one device.

    ``total_samples`` is derived from ``samples_per_class`` so the two can
    never disagree.
    """

    id: int
    samples_per_class: np.ndarray
    cpu_freq: float  # cycles/s
    flops_per_sample: float
    max_power: float  # W
    energy_budget: float  # J, over the whole horizon
    distance: float  # m
    flops_per_cycle: float = 1.0
    power_coeff: float = 1e-28

    def __post_init__(self):
        self.samples_per_class = np.asarray(self.samples_per_class, dtype=np.int64)
        if np.any(self.samples_per_class < 0):
            raise ValueError(f"device {self.id}: negative class count")
        if self.total_samples <= 0:
            raise ValueError(f"device {self.id}: no samples")
        for name in ("cpu_freq", "flops_per_sample", "max_power", "energy_budget",
                     "distance", "flops_per_cycle", "power_coeff"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"device {self.id}: {name} must be positive, got {value}")

    @property
    def total_samples(self) -> int:
        return int(self.samples_per_class.sum())


@dataclass(frozen=True)
class ChannelModel:
    path_loss_const: float = 1e-3  # -30 dB
    ref_distance: float = 1.0
    path_loss_exp: float = 2.0
    noise_psd: float = field(default_factory=lambda: dbm_to_watts(-174.0))  # W/Hz
    bandwidth_total: float = 5e6

    def __post_init__(self):
        for name in ("path_loss_const", "ref_distance", "noise_psd", "bandwidth_total"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.path_loss_exp < 1:
            raise ValueError("path_loss_exp must be >= 1")


@dataclass(frozen=True)
class ChannelDraw:
    gains: np.ndarray
    round: int


@dataclass(frozen=True)
class PayloadSpec:
    """Uplink payload of one knowledge upload: ``knowledge_params`` values of ``bits_per_param`` bits."""

    knowledge_params: int
    bits_per_param: int = 32
    model_params: int = 0

    def __post_init__(self):
        if self.knowledge_params < 0:
            raise ValueError("knowledge_params must be >= 0")
        if self.bits_per_param < 1:
            raise ValueError("bits_per_param must be >= 1")

    @classmethod
    def for_knowledge(cls, num_classes: int, feature_dim: int, bits_per_param: int = 32,
                      model_params: int = 0) -> "PayloadSpec":
        return cls(num_classes * feature_dim, bits_per_param, model_params)

    @property
    def bits(self) -> int:
        return self.knowledge_params * self.bits_per_param

    @property
    def bytes(self) -> float:
        return self.bits / 8

    @property
    def overhead_ratio(self) -> float:
        """Knowledge parameters relative to full-model parameters."""
        return self.knowledge_params / self.model_params


def channel_gain(model: ChannelModel, distance: float, fading: float) -> float:
    return model.path_loss_const * fading * (model.ref_distance / distance) ** model.path_loss_exp


def fading_stream(seed: int, device: int, round_: int) -> np.random.Generator:
    # keyed per (seed, device, round): independent of how many other draws happen
    return np.random.default_rng([seed, 0x6368616E, device, round_])


def draw_channel(model: ChannelModel, profiles: Sequence[DeviceProfile], round_: int,
                 seed: int) -> ChannelDraw:
    gains = np.empty(len(profiles))
    for i, prof in enumerate(profiles):
        rho = fading_stream(seed, prof.id, round_).exponential(1.0)
        gains[i] = channel_gain(model, prof.distance, rho)
    return ChannelDraw(gains=gains, round=round_)


def compute_latency(profile: DeviceProfile, local_iters: int) -> float:
    return local_iters * profile.total_samples * profile.flops_per_sample / (
        profile.cpu_freq * profile.flops_per_cycle)


def compute_energy(profile: DeviceProfile, local_iters: int) -> float:
    return (profile.power_coeff * local_iters * profile.total_samples
            * profile.flops_per_sample * profile.cpu_freq ** 2 / profile.flops_per_cycle)


def upload_window(profile: DeviceProfile, deadline: float, local_iters: int) -> float:
    """Time left for uploading once local training is done; <= 0 means infeasible."""
    return deadline - compute_latency(profile, local_iters)


def uplink_rate(share: float, power: float, gain: float, model: ChannelModel) -> float:
    if power <= 0:
        return 0.0
    band = share * model.bandwidth_total
    return band * math.log2(1.0 + power * gain / (band * model.noise_psd))


def upload_latency(payload: PayloadSpec, rate: float) -> float:
    if rate <= 0:
        return math.inf
    return payload.bits / rate


def upload_energy(share: float, upload_time: float, gain: float, payload: PayloadSpec,
                  model: ChannelModel) -> float:
    """Transmit energy to push the payload in exactly ``upload_time`` over ``share`` of the band."""
    band = share * model.bandwidth_total
    exponent = payload.bits * LN2 / (band * upload_time)
    if exponent > 700.0:
        return math.inf
    return band * upload_time * model.noise_psd / gain * math.expm1(exponent)
