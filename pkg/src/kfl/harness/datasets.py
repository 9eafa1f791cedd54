"""Dataset sources: Gaussian-cluster synthetic data and MNIST IDX files."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..core.data import read_idx


def gen_synthetic(num_classes: int, dim: int, per_class: int, spread: float,
                  rng: np.random.Generator, means: np.ndarray | None = None,
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Isotropic Gaussian clusters around random unit-norm class means.

    Returns ``(features, labels, means)``; pass ``means`` back in to draw a
    test set from the same clusters.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if means is None:
        means = rng.standard_normal((num_classes, dim))
        means /= np.linalg.norm(means, axis=1, keepdims=True)
    labels = np.repeat(np.arange(num_classes), per_class)
    features = means[labels] + spread * rng.standard_normal((len(labels), dim))
    return features, labels, means


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def load_mnist(directory: str | Path, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    """Images flattened to 784 floats in [0, 1] and integer labels."""
    directory = Path(directory)
    img_name, lbl_name = MNIST_FILES[split]
    images = read_idx(_find(directory, img_name))
    labels = read_idx(_find(directory, lbl_name))
    if images.shape[0] != labels.shape[0]:
        raise ValueError("MNIST image/label counts differ")
    return images.reshape(len(images), -1).astype(float) / 255.0, labels.astype(np.int64)
