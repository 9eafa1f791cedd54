"""Experiment configuration: nested dataclasses backed by a YAML file.

Values are stored in SI units. The loader also accepts ``*_dbm`` / ``*_db``
spellings of power-like keys and converts them on the way in.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from ..core.training import HyperParams
from ..scheduler import PATTERNS
from ..system_model import db_to_linear, dbm_to_watts

SCHEDULERS = ("proposed", "round_robin", "myopic", "pattern", "full")
DATASETS = ("synthetic", "mnist")


class ConfigError(ValueError):
    """Invalid or unreadable configuration; the message names the offending field."""


@dataclass(frozen=True)
class ChannelConfig:
    bandwidth_total: float = 5e6  # Hz
    noise_psd: float = dbm_to_watts(-174.0)  # W/Hz
    path_loss_const: float = 1e-3
    ref_distance: float = 1.0  # m
    path_loss_exp: float = 2.0


@dataclass(frozen=True)
class DeviceConfig:
    cpu_freqs: tuple[float, ...] = (0.85e9, 1.12e9, 1.2e9, 1.3e9)
    max_power: float = 0.01  # W
    energy_per_round: float = 0.02  # J; the budget is this times the horizon
    cell_radius: float = 100.0  # m
    power_coeff: float = 1e-28
    flops_per_cycle: float = 1.0
    flops_per_param: float = 2500.0  # per sample per local step


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int = 8
    hidden_choices: tuple[tuple[int, ...], ...] = ((32,), (48,), (24,), (32, 16))
    bits_per_param: int = 32


@dataclass(frozen=True)
class DataConfig:
    per_class: int = 40
    test_per_class: int = 500
    spread: float = 1.0
    dim: int = 20
    test_per_device: int = 100
    mnist_dir: Optional[str] = None


@dataclass(frozen=True)
class PatternConfig:
    name: str = "uniform"
    mean: int = 10
    peak: int = 20


@dataclass(frozen=True)
class ExperimentConfig:
    num_devices: int
    seed: int = 0
    horizon: int = 30
    scheduler_kind: str = "proposed"
    tradeoff_v: float = 1e-4
    dataset: str = "synthetic"
    classes_per_device: int = 2
    num_classes: int = 10
    deadline: float = 1.0  # s
    eval_interval: int = 1
    round_robin_window: int = 5
    output_path: Optional[str] = None
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    devices: DeviceConfig = field(default_factory=DeviceConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    pattern: PatternConfig = field(default_factory=PatternConfig)
    hp: HyperParams = field(default_factory=HyperParams)

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _require(ok: bool, name: str, msg: str) -> None:
    if not ok:
        raise ConfigError(f"{name}: {msg}")


def validate(cfg: ExperimentConfig) -> None:
    _require(isinstance(cfg.num_devices, int) and cfg.num_devices >= 1, "num_devices",
             "must be a positive integer")
    _require(cfg.horizon >= 1, "horizon", "must be >= 1")
    _require(cfg.scheduler_kind in SCHEDULERS, "scheduler_kind", f"expected one of {SCHEDULERS}")
    _require(cfg.dataset in DATASETS, "dataset", f"expected one of {DATASETS}")
    _require(cfg.tradeoff_v >= 0, "tradeoff_v", "must be >= 0")
    _require(1 <= cfg.classes_per_device <= cfg.num_classes, "classes_per_device",
             "must lie in [1, num_classes]")
    _require((cfg.classes_per_device * cfg.num_devices) % cfg.num_classes == 0,
             "classes_per_device", "classes_per_device * num_devices must be a multiple of num_classes")
    _require(cfg.deadline > 0, "deadline", "must be positive")
    _require(cfg.eval_interval >= 1, "eval_interval", "must be >= 1")
    _require(cfg.round_robin_window >= 1, "round_robin_window", "must be >= 1")
    for name in ("bandwidth_total", "noise_psd", "path_loss_const", "ref_distance"):
        _require(getattr(cfg.channel, name) > 0, f"channel.{name}", "must be positive")
    _require(cfg.channel.path_loss_exp >= 1, "channel.path_loss_exp", "must be >= 1")
    dev = cfg.devices
    _require(len(dev.cpu_freqs) > 0 and all(f > 0 for f in dev.cpu_freqs),
             "devices.cpu_freqs", "needs at least one positive frequency")
    for name in ("max_power", "energy_per_round", "cell_radius", "power_coeff",
                 "flops_per_cycle", "flops_per_param"):
        _require(getattr(dev, name) > 0, f"devices.{name}", "must be positive")
    _require(cfg.model.feature_dim >= 1, "model.feature_dim", "must be >= 1")
    _require(len(cfg.model.hidden_choices) > 0
             and all(all(w >= 1 for w in h) for h in cfg.model.hidden_choices),
             "model.hidden_choices", "needs at least one list of positive widths")
    _require(cfg.model.bits_per_param >= 1, "model.bits_per_param", "must be >= 1")
    _require(cfg.data.per_class >= 1, "data.per_class", "must be >= 1")
    _require(cfg.data.test_per_class >= 1, "data.test_per_class", "must be >= 1")
    _require(cfg.data.spread >= 0, "data.spread", "must be >= 0")
    _require(cfg.data.dim >= 1, "data.dim", "must be >= 1")
    _require(cfg.data.test_per_device >= 1, "data.test_per_device", "must be >= 1")
    if cfg.dataset == "mnist":
        _require(cfg.data.mnist_dir is not None, "data.mnist_dir", "required for the mnist dataset")
    _require(cfg.pattern.name in PATTERNS, "pattern.name", f"expected one of {PATTERNS}")
    _require(1 <= cfg.pattern.mean <= cfg.pattern.peak, "pattern.mean",
             "must lie in [1, pattern.peak]")


# --- parsing -----------------------------------------------------------------

_CONVERTED = {
    "channel": {"noise_psd_dbm_hz": ("noise_psd", dbm_to_watts),
                "path_loss_db": ("path_loss_const", db_to_linear)},
    "devices": {"max_power_dbm": ("max_power", dbm_to_watts)},
}


def build_section(cls, raw: Any, prefix: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    raw = dict(raw)
    for key, (target, conv) in _CONVERTED.get(prefix, {}).items():
        if key in raw:
            if target in raw:
                raise ConfigError(f"{prefix}.{key}: conflicts with {prefix}.{target}")
            raw[target] = conv(float(raw.pop(key)))
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        where = f"{prefix}." if prefix else ""
        raise ConfigError(f"{where}{unknown[0]}: unknown key")
    kwargs = {}
    for name, value in raw.items():
        sub = _NESTED.get(name) if not prefix else None
        if sub is not None:
            kwargs[name] = build_section(sub, value, name)
        elif name == "cpu_freqs":
            kwargs[name] = tuple(float(v) for v in value)
        elif name == "hidden_choices":
            kwargs[name] = tuple(tuple(int(w) for w in h) for h in value)
        else:
            kwargs[name] = _coerce(value, fields[name].type, f"{prefix}.{name}" if prefix else name)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except TypeError as exc:
        if cls is ExperimentConfig and "num_devices" not in kwargs:
            raise ConfigError("num_devices: required field (K) is missing") from exc
        raise ConfigError(f"{prefix or 'config'}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from exc


def _coerce(value, annotation: str, name: str):
    # YAML 1.1 reads "1e-4" as a string; numeric fields accept it anyway
    if annotation == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {value!r}") from None
    if annotation == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
    return value


_NESTED = {
    "channel": ChannelConfig,
    "devices": DeviceConfig,
    "model": ModelConfig,
    "data": DataConfig,
    "pattern": PatternConfig,
    "hp": HyperParams,
}


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{source}:{where}: {problem}") from exc
    return build_section(ExperimentConfig, raw, "")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return parse_config(text, str(path))


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(_plain(dataclasses.asdict(cfg)), sort_keys=False)
