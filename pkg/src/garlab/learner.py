"""Datasets and a small MLP learner with hand-written gradients.

Covers the data side (an IDX-format image/label reader, deterministic
synthetic Gaussian blobs, and disjoint near-equal partitioning into per-node
shards with a train/test split) and the model side (a one-hidden-layer MLP
with ReLU and log-softmax, exact backprop over a flattened parameter vector,
and SGD/Adam steps). Everything is float64 and deterministic under a seed.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import (ConfigError, DatasetFormatError, DimensionMismatchError,
                     EmptySetError, InfeasibleError)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DEFAULT_LEARNING_RATE = 0.001

OPTIMIZER_VARIANTS = ("sgd", "adam")


@dataclass
class Dataset:
    """Feature matrix plus integer labels in [0, num_classes)."""
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DimensionMismatchError(
                f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise DimensionMismatchError(
                f"labels length {self.labels.shape} does not match "
                f"{self.features.shape[0]} feature rows")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.num_classes):
            raise ConfigError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{self.labels.min()}, {self.labels.max()}]")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


@dataclass
class Shard:
    """One node's slice of the data, already split into train and test."""
    train: Dataset
    test: Dataset
    node_index: int


def _read_exact(fh, count: int, path: str, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise DatasetFormatError(f"{path}: truncated while reading {what}")
    return data


def load_mnist(image_path, label_path) -> Dataset:
    """Read an IDX image/label file pair into a 10-class dataset.

    Big-endian headers are validated (image magic 0x00000803, label magic
    0x00000801, matching example counts); pixels are scaled to [0, 1].
    """
    image_path, label_path = str(image_path), str(label_path)
    with open(image_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(
            ">iiii", _read_exact(fh, 16, image_path, "image header"))
        if magic != IDX_IMAGE_MAGIC:
            raise DatasetFormatError(
                f"{image_path}: bad magic {magic:#010x}, expected "
                f"{IDX_IMAGE_MAGIC:#010x} (field: magic)")
        if count < 0 or rows <= 0 or cols <= 0:
            raise DatasetFormatError(
                f"{image_path}: bad header counts count={count} rows={rows} "
                f"cols={cols} (field: count)")
        raw = _read_exact(fh, count * rows * cols, image_path, "pixel data")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    with open(label_path, "rb") as fh:
        magic, label_count = struct.unpack(
            ">ii", _read_exact(fh, 8, label_path, "label header"))
        if magic != IDX_LABEL_MAGIC:
            raise DatasetFormatError(
                f"{label_path}: bad magic {magic:#010x}, expected "
                f"{IDX_LABEL_MAGIC:#010x} (field: magic)")
        if label_count != count:
            raise DatasetFormatError(
                f"{label_path}: {label_count} labels for {count} images "
                f"(field: count)")
        labels = np.frombuffer(_read_exact(fh, label_count, label_path,
                                           "label data"), dtype=np.uint8)
    if labels.size and labels.max() > 9:
        raise DatasetFormatError(
            f"{label_path}: label value {labels.max()} out of range 0..9 "
            f"(field: label)")
    return Dataset(images.astype(np.float64) / 255.0,
                   labels.astype(np.int64), 10)


def idx_header_counts(image_path, label_path) -> tuple[int, int, int]:
    """(example count, rows*cols, label count) from the headers alone."""
    with open(str(image_path), "rb") as fh:
        magic, count, rows, cols = struct.unpack(
            ">iiii", _read_exact(fh, 16, str(image_path), "image header"))
        if magic != IDX_IMAGE_MAGIC:
            raise DatasetFormatError(
                f"{image_path}: bad magic {magic:#010x} (field: magic)")
    with open(str(label_path), "rb") as fh:
        lmagic, label_count = struct.unpack(
            ">ii", _read_exact(fh, 8, str(label_path), "label header"))
        if lmagic != IDX_LABEL_MAGIC:
            raise DatasetFormatError(
                f"{label_path}: bad magic {lmagic:#010x} (field: magic)")
    return count, rows * cols, label_count


def make_synthetic(num_classes: int, per_class: int, input_dim: int, seed: int,
                   separation: float = 4.0, spread: float = 1.0) -> Dataset:
    """Gaussian class blobs around deterministic, well-separated means.

    Class k is centred at +/-separation on coordinate k // 2 (alternating
    sign), so up to 2 * input_dim classes stay pairwise separated; any
    further classes fall back to seeded random directions. Identical
    arguments always produce an identical dataset.
    """
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if per_class < 1 or input_dim < 1:
        raise ConfigError(
            f"per_class and input_dim must be >= 1, got {per_class}, {input_dim}")
    rng = np.random.default_rng(seed)
    means = np.zeros((num_classes, input_dim), dtype=np.float64)
    for k in range(num_classes):
        if k < 2 * input_dim:
            means[k, k // 2] = separation if k % 2 == 0 else -separation
        else:
            direction = rng.standard_normal(input_dim)
            means[k] = direction / np.linalg.norm(direction) * separation
    features = np.empty((num_classes * per_class, input_dim), dtype=np.float64)
    for k in range(num_classes):
        block = rng.normal(loc=means[k], scale=spread, size=(per_class, input_dim))
        features[k * per_class:(k + 1) * per_class] = block
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    return Dataset(features, labels, num_classes)


def partition(dataset: Dataset, n: int, test_fraction: float = 0.2,
              seed: int = 0) -> list[Shard]:
    """Shuffle and split ``dataset`` into n disjoint near-equal shards.

    Shard sizes differ by at most one; within each shard the tail
    ``test_fraction`` (rounded) becomes the test split. The same seed
    always yields the same partition.
    """
    if n < 1:
        raise ConfigError(f"partition requires n >= 1, got {n}")
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigError(
            f"test_fraction must lie in [0, 1), got {test_fraction}")
    if len(dataset) < n:
        raise InfeasibleError(
            f"dataset has {len(dataset)} examples, fewer than {n} shards")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    base, extra = divmod(len(dataset), n)
    shards = []
    start = 0
    for node in range(n):
        size = base + (1 if node < extra else 0)
        chunk = perm[start:start + size]
        start += size
        test_count = int(size * test_fraction + 0.5)
        shards.append(Shard(train=dataset.take(chunk[:size - test_count]),
                            test=dataset.take(chunk[size - test_count:]),
                            node_index=node))
    return shards


# --- model ---------------------------------------------------------------


@dataclass
class ModelParams:
    """Flattened MLP parameters with the layer shapes alongside.

    Layout: W1 (input_dim x hidden_dim) | b1 | W2 (hidden_dim x num_classes) | b2.
    """
    flat: np.ndarray
    input_dim: int
    hidden_dim: int
    num_classes: int

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=np.float64)
        expected = param_count(self.input_dim, self.hidden_dim, self.num_classes)
        if self.flat.ndim != 1 or self.flat.size != expected:
            raise DimensionMismatchError(
                f"flat parameter vector has size {self.flat.size}, "
                f"expected {expected}")

    def unpack(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        i, h, c = self.input_dim, self.hidden_dim, self.num_classes
        w1_end = i * h
        b1_end = w1_end + h
        w2_end = b1_end + h * c
        return (self.flat[:w1_end].reshape(i, h),
                self.flat[w1_end:b1_end],
                self.flat[b1_end:w2_end].reshape(h, c),
                self.flat[w2_end:])

    def with_flat(self, flat: np.ndarray) -> "ModelParams":
        return replace(self, flat=flat)


def param_count(input_dim: int, hidden_dim: int, num_classes: int) -> int:
    return input_dim * hidden_dim + hidden_dim + hidden_dim * num_classes + num_classes


def init_params(input_dim: int, hidden_dim: int, num_classes: int,
                seed: int) -> ModelParams:
    """Seeded init: weights uniform in +/-sqrt(6 / (fan_in + fan_out)), biases 0."""
    rng = np.random.default_rng(seed)
    bound1 = np.sqrt(6.0 / (input_dim + hidden_dim))
    bound2 = np.sqrt(6.0 / (hidden_dim + num_classes))
    w1 = rng.uniform(-bound1, bound1, size=(input_dim, hidden_dim))
    w2 = rng.uniform(-bound2, bound2, size=(hidden_dim, num_classes))
    flat = np.concatenate([w1.ravel(), np.zeros(hidden_dim),
                           w2.ravel(), np.zeros(num_classes)])
    return ModelParams(flat, input_dim, hidden_dim, num_classes)


def _forward(params: ModelParams, batch: Dataset):
    if len(batch) == 0:
        raise EmptySetError("forward pass needs a non-empty batch")
    if batch.input_dim != params.input_dim:
        raise DimensionMismatchError(
            f"batch features have dimension {batch.input_dim}, "
            f"model expects {params.input_dim}")
    if batch.num_classes != params.num_classes:
        raise DimensionMismatchError(
            f"batch has {batch.num_classes} classes, model expects "
            f"{params.num_classes}")
    w1, b1, w2, b2 = params.unpack()
    x = batch.features
    z1 = x @ w1 + b1
    hidden = np.maximum(z1, 0.0)
    logits = hidden @ w2 + b2
    shift = logits.max(axis=1, keepdims=True)
    log_probs = logits - (shift + np.log(np.exp(logits - shift)
                                         .sum(axis=1, keepdims=True)))
    return x, z1, hidden, logits, log_probs


def forward_loss(params: ModelParams, batch: Dataset) -> tuple[float, int]:
    """Mean negative log-likelihood and the count of correct argmax predictions."""
    _, _, _, logits, log_probs = _forward(params, batch)
    rows = np.arange(len(batch))
    loss = -float(np.mean(log_probs[rows, batch.labels]))
    correct = int(np.sum(np.argmax(logits, axis=1) == batch.labels))
    return loss, correct


def backward(params: ModelParams, batch: Dataset) -> np.ndarray:
    """Exact gradient of the mean NLL with respect to the flat parameters."""
    return loss_and_grad(params, batch)[2]


def loss_and_grad(params: ModelParams, batch: Dataset) -> tuple[float, int, np.ndarray]:
    """One fused forward/backward pass: (loss, correct count, flat gradient)."""
    x, z1, hidden, logits, log_probs = _forward(params, batch)
    _, _, w2, _ = params.unpack()
    rows = np.arange(len(batch))
    loss = -float(np.mean(log_probs[rows, batch.labels]))
    correct = int(np.sum(np.argmax(logits, axis=1) == batch.labels))

    dlogits = np.exp(log_probs)
    dlogits[rows, batch.labels] -= 1.0
    dlogits /= len(batch)
    dw2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhidden = dlogits @ w2.T
    dz1 = dhidden * (z1 > 0.0)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    grad = np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])
    return loss, correct, grad


def evaluate(params: ModelParams, dataset: Dataset) -> tuple[float, float]:
    """(mean loss, accuracy) over a full dataset."""
    loss, correct = forward_loss(params, dataset)
    return loss, correct / len(dataset)


# --- optimizers ----------------------------------------------------------


@dataclass(frozen=True)
class OptimizerState:
    """SGD or Adam state; moments start zeroed and are sized on first use."""
    variant: str
    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step: int = 0

    def __post_init__(self):
        if self.variant not in OPTIMIZER_VARIANTS:
            raise ConfigError(
                f"optimizer.variant: unknown variant {self.variant!r} "
                f"(choose from {', '.join(OPTIMIZER_VARIANTS)})")
        if not self.learning_rate > 0.0:
            raise ConfigError(
                f"optimizer.learning_rate: must be > 0, got {self.learning_rate}")


def optimizer_step(state: OptimizerState, params: np.ndarray,
                   grad: np.ndarray) -> tuple[np.ndarray, OptimizerState]:
    """Apply one update; returns the new flat parameters and the new state."""
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 1:
        raise DimensionMismatchError(
            f"parameter/gradient shape mismatch: {p.shape} vs {g.shape}")
    if state.variant == "sgd":
        return p - state.learning_rate * g, replace(state, step=state.step + 1)
    m = state.m if state.m is not None else np.zeros_like(p)
    v = state.v if state.v is not None else np.zeros_like(p)
    if m.shape != p.shape or v.shape != p.shape:
        raise DimensionMismatchError(
            f"optimizer moments have shape {m.shape}, parameters {p.shape}")
    t = state.step + 1
    m = state.beta1 * m + (1.0 - state.beta1) * g
    v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_p = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_p, replace(state, m=m, v=v, step=t)
