"""Dataset shards, class-sorted non-IID partitioning and the IDX file reader."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

_IDX_DTYPES = {
    0x08: np.uint8,
    0x09: np.int8,
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


@dataclass
class DatasetShard:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label out of range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def per_class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


class PartitionError(ValueError):
    pass


def partition_non_iid(labels: np.ndarray, num_devices: int, classes_per_device: int,
                      num_classes: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Index sets giving each device ``classes_per_device`` class-pure shards.

    Each class is shuffled and cut into ``m*K/C`` shards (remainder samples go
    to the last shard of the class); the ``m*K`` shards are then dealt out
    ``m`` per device at random.
    """
    labels = np.asarray(labels)
    m, k, c = classes_per_device, num_devices, num_classes
    if not 1 <= m <= c:
        raise PartitionError(f"classes_per_device must lie in [1, {c}], got {m}")
    if (m * k) % c:
        raise PartitionError(f"m*K = {m * k} shards cannot split evenly over {c} classes")
    per_class = m * k // c
    shards = []
    for cls in range(c):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        size = len(idx) // per_class
        if size == 0:
            raise PartitionError(f"class {cls} has {len(idx)} samples for {per_class} shards")
        for s in range(per_class):
            stop = (s + 1) * size if s < per_class - 1 else len(idx)
            shards.append(idx[s * size:stop])
    deal = rng.permutation(len(shards))
    return [np.sort(np.concatenate([shards[j] for j in deal[i * m:(i + 1) * m]]))
            for i in range(k)]


def make_shards(features: np.ndarray, labels: np.ndarray, parts: Sequence[np.ndarray],
                num_classes: int) -> list[DatasetShard]:
    return [DatasetShard(features[p], labels[p], num_classes) for p in parts]


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    raw = total * weights / weights.sum()
    out = np.floor(raw).astype(int)
    short = total - out.sum()
    order = np.argsort(-(raw - out), kind="stable")
    out[order[:short]] += 1
    return out


def matched_test_shards(features: np.ndarray, labels: np.ndarray,
                        train_shards: Sequence[DatasetShard], per_device: int,
                        rng: np.random.Generator) -> list[DatasetShard]:
    """Per-device test sets following each device's training class mix."""
    num_classes = train_shards[0].num_classes
    pools = [np.flatnonzero(labels == c) for c in range(num_classes)]
    out = []
    for shard in train_shards:
        counts = _apportion(per_device, shard.per_class_counts.astype(float))
        picks = []
        for c, n in enumerate(counts):
            if n:
                pool = pools[c]
                picks.append(rng.choice(pool, size=n, replace=n > len(pool)))
        idx = np.concatenate(picks) if picks else np.empty(0, dtype=int)
        out.append(DatasetShard(features[idx], labels[idx], num_classes))
    return out


def read_idx(path: str | Path) -> np.ndarray:
    """Read an IDX array (the MNIST container format); ``.gz`` files are decompressed."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise ValueError(f"{path}: not an IDX file")
    dtype = _IDX_DTYPES.get(raw[2])
    if dtype is None:
        raise ValueError(f"{path}: unknown IDX type code 0x{raw[2]:02x}")
    ndim = raw[3]
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    data = np.frombuffer(raw, dtype=dtype, offset=4 + 4 * ndim)
    if data.size != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} values, found {data.size}")
    return data.reshape(dims)


def write_idx(path: str | Path, array: np.ndarray) -> None:
    codes = {np.dtype(v): k for k, v in _IDX_DTYPES.items()}
    arr = np.asarray(array)
    big = arr.dtype.newbyteorder(">")
    if big not in codes:
        raise ValueError(f"dtype {arr.dtype} has no IDX type code")
    code = codes[big]
    header = bytes([0, 0, code, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(header + arr.astype(big).tobytes())
