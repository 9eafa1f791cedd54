import gzip

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kfl.core.data import (DatasetShard, PartitionError, make_shards, matched_test_shards,
                           partition_non_iid, read_idx, write_idx)


def labels_for(c, per_class):
    return np.repeat(np.arange(c), per_class)


def test_hundred_devices_two_shards_each():
    y = labels_for(10, 600)
    parts = partition_non_iid(y, 100, 2, 10, np.random.default_rng(0))
    assert len(parts) == 100
    assert all(len(p) == 60 for p in parts)  # 20 shards of 30 per class, two per device
    assert all(len(np.unique(y[p])) <= 2 for p in parts)


def test_single_device_all_classes():
    y = labels_for(4, 5)
    parts = partition_non_iid(y, 1, 4, 4, np.random.default_rng(0))
    assert np.array_equal(parts[0], np.arange(20))


@given(st.integers(0, 2**32 - 1), st.sampled_from([(10, 2, 10), (20, 2, 10), (6, 3, 9), (5, 2, 5)]),
       st.integers(0, 7))
@settings(max_examples=60, deadline=None)
def test_partition_is_a_partition(seed, shape, extra):
    k, m, c = shape
    per_class = m * k // c * 3 + extra
    y = labels_for(c, per_class)
    parts = partition_non_iid(y, k, m, c, np.random.default_rng(seed))
    joined = np.concatenate(parts)
    assert len(joined) == len(y) and len(np.unique(joined)) == len(y)
    assert all(len(np.unique(y[p])) <= m for p in parts)


def test_remainder_goes_to_last_shard():
    y = labels_for(2, 7)  # 7 samples per class, 2 shards per class
    parts = partition_non_iid(y, 2, 2, 2, np.random.default_rng(0))
    sizes = sorted(len(p) for p in parts)
    assert sum(sizes) == 14 and set(sizes) <= {6, 7, 8}


def test_partition_errors():
    y = labels_for(10, 10)
    with pytest.raises(PartitionError):
        partition_non_iid(y, 7, 2, 10, np.random.default_rng(0))
    with pytest.raises(PartitionError):
        partition_non_iid(y, 10, 11, 10, np.random.default_rng(0))
    with pytest.raises(PartitionError):
        partition_non_iid(labels_for(10, 1), 20, 2, 10, np.random.default_rng(0))


def test_shard_validation():
    with pytest.raises(ValueError):
        DatasetShard(np.zeros((2, 3)), np.array([0]), 2)
    with pytest.raises(ValueError):
        DatasetShard(np.zeros((1, 3)), np.array([5]), 2)


def test_matched_test_shards_follow_class_mix():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(40, 2)), labels_for(4, 10)
    train = make_shards(X, y, partition_non_iid(y, 4, 2, 4, rng), 4)
    Xt, yt = rng.normal(size=(400, 2)), labels_for(4, 100)
    tests = matched_test_shards(Xt, yt, train, 50, rng)
    for tr, te in zip(train, tests):
        assert len(te) == 50
        assert set(np.flatnonzero(te.per_class_counts)) <= set(np.flatnonzero(tr.per_class_counts))


@pytest.mark.parametrize("dtype", [np.uint8, np.int8, np.int16, np.int32, np.float32, np.float64])
@pytest.mark.parametrize("suffix", ["", ".gz"])
def test_idx_round_trip(tmp_path, dtype, suffix):
    arr = (np.arange(24).reshape(2, 3, 4) % 100).astype(dtype)
    path = tmp_path / f"a.idx{suffix}"
    write_idx(path, arr)
    back = read_idx(path)
    assert back.shape == arr.shape and np.array_equal(back, arr)


def test_idx_reads_mnist_style_header(tmp_path):
    images = np.random.default_rng(0).integers(0, 256, size=(3, 28, 28), dtype=np.uint8)
    raw = bytes([0, 0, 8, 3]) + (3).to_bytes(4, "big") + (28).to_bytes(4, "big") * 2 + images.tobytes()
    (tmp_path / "imgs").write_bytes(raw)
    with gzip.open(tmp_path / "imgs.gz", "wb") as fh:
        fh.write(raw)
    assert np.array_equal(read_idx(tmp_path / "imgs"), images)
    assert np.array_equal(read_idx(tmp_path / "imgs.gz"), images)
    labels = bytes([0, 0, 8, 1]) + (3).to_bytes(4, "big") + bytes([7, 0, 9])
    (tmp_path / "lbl").write_bytes(labels)
    assert list(read_idx(tmp_path / "lbl")) == [7, 0, 9]


def test_idx_rejects_bad_files(tmp_path):
    (tmp_path / "bad").write_bytes(b"\x01\x02\x08\x01")
    with pytest.raises(ValueError):
        read_idx(tmp_path / "bad")
    (tmp_path / "short").write_bytes(bytes([0, 0, 8, 1]) + (5).to_bytes(4, "big") + b"\x00")
    with pytest.raises(ValueError):
        read_idx(tmp_path / "short")
    with pytest.raises(ValueError):
        write_idx(tmp_path / "x", np.zeros(2, dtype=np.complex64))
