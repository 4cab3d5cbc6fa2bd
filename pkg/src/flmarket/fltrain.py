"""Desk-scale federated training over recruited data owners.

Each owner holds a synthetic Gaussian-blob dataset (blurred owners get
uniform label noise).  Every owner trains a softmax-regression model
locally; the consumer aggregates with sample-weighted FedAvg and is
scored by test-set accuracy.  IDX-format image files (the MNIST binary
container) can be ingested for a real-data smoke run with the same
model.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .market import ConfigurationError, DataOwner, Quality

NUM_CLASSES = 10
FEATURE_DIM = 8
# moderate class overlap: accuracy sits below ceiling so data quality
# and cohort composition show up in the final score
CENTER_SPREAD = 1.5


class IdxFormatError(ValueError):
    pass


@dataclass
class LocalDataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) ints in [0, K)
    owner_id: int


def make_class_centers(
    rng: np.random.Generator, num_classes: int = NUM_CLASSES, dim: int = FEATURE_DIM
) -> np.ndarray:
    return rng.normal(scale=CENTER_SPREAD, size=(num_classes, dim))


def partition_mode(partition: str, shards_per_owner: int, num_classes: int = NUM_CLASSES):
    """Validate the partition setting; returns ('iid', None) or ('niid', shards)."""
    if partition == "iid":
        return ("iid", None)
    if partition == "niid":
        if not 1 <= shards_per_owner <= num_classes:
            raise ConfigurationError(
                f"shards_per_owner must be in [1, {num_classes}], got {shards_per_owner}"
            )
        return ("niid", shards_per_owner)
    raise ConfigurationError(f"unknown partition mode {partition!r}")


def synth_dataset(
    owner: DataOwner,
    centers: np.ndarray,
    noise_rate_blurred: float,
    rng: np.random.Generator,
    classes: Optional[np.ndarray] = None,
) -> LocalDataset:
    """Per-owner synthetic data around the global class centers.

    ``classes`` restricts the owner's label support (non-IID shards);
    defaults to all classes.  Blurred owners have a noise_rate_blurred
    fraction of labels reassigned uniformly at random.
    """
    num_classes, dim = centers.shape
    if classes is None:
        classes = np.arange(num_classes)
    n = owner.num_samples
    labels = rng.choice(classes, size=n)
    features = centers[labels] + rng.standard_normal((n, dim))
    if owner.quality is Quality.BLURRED and noise_rate_blurred > 0:
        mask = rng.random(n) < noise_rate_blurred
        labels = labels.copy()
        labels[mask] = rng.integers(0, num_classes, int(mask.sum()))
    return LocalDataset(features=features, labels=labels, owner_id=owner.id)


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(weights: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    p = _softmax(_augment(X) @ weights.T)
    return float(-np.mean(np.log(p[np.arange(len(y)), y] + 1e-300)))


def cross_entropy_gradient(weights: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    Xa = _augment(X)
    p = _softmax(Xa @ weights.T)
    onehot = np.zeros_like(p)
    onehot[np.arange(len(y)), y] = 1.0
    return (p - onehot).T @ Xa / len(y)


def zero_model(num_classes: int = NUM_CLASSES, dim: int = FEATURE_DIM) -> np.ndarray:
    return np.zeros((num_classes, dim + 1))


def local_train(
    weights: np.ndarray,
    dataset: LocalDataset,
    local_epochs: int = 100,
    lr: float = 0.05,
) -> np.ndarray:
    """Full-batch gradient descent on softmax cross-entropy."""
    w = weights.copy()
    for step in range(local_epochs):
        w = w - lr * cross_entropy_gradient(w, dataset.features, dataset.labels)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(f"non-finite weights at local step {step}")
    return w


def fedavg(updates: Sequence[tuple]) -> np.ndarray:
    """Sample-count-weighted average of weight matrices."""
    if len(updates) == 0:
        raise ValueError("fedavg needs at least one update")
    total = sum(n for _, n in updates)
    out = np.zeros_like(updates[0][0])
    for w, n in updates:
        out += (n / total) * w
    return out


def evaluate(weights: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax-correct predictions (ties -> lowest class id)."""
    if len(labels) == 0:
        raise ValueError("test set is empty")
    preds = np.argmax(_augment(features) @ weights.T, axis=1)
    return float(np.mean(preds == labels))


_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801


def _read_idx(path, expected_magic: int) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise IdxFormatError(f"{path}: file too short for a magic number")
    (magic,) = struct.unpack(">I", blob[:4])
    if magic != expected_magic:
        raise IdxFormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise IdxFormatError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    expected = int(np.prod(dims))
    body = blob[header:]
    if len(body) != expected:
        raise IdxFormatError(
            f"{path}: expected {expected} data bytes, found {len(body)}"
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path) -> LocalDataset:
    """Parse an IDX image/label file pair; pixels scaled to [0, 1]."""
    images = _read_idx(images_path, _IDX_IMAGE_MAGIC)
    labels = _read_idx(labels_path, _IDX_LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"image/label count mismatch: {images.shape[0]} vs {labels.shape[0]}"
        )
    X = images.reshape(images.shape[0], -1).astype(float) / 255.0
    return LocalDataset(features=X, labels=labels.astype(int), owner_id=0)
