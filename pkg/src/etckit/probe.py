"""Linear softmax probe on mean-pooled patch embeddings.

Stands in for full isotropic-network training at desk scale: the probe
isolates exactly the mechanism credited for accuracy retention on
encrypted images (the patch embedding).  Three experiment arms:

    1. plain features,
    2. the same probe evaluated on uniform-key ciphertext features with
       key-adapted embedding parameters (must match arm 1 exactly: the
       features are equal up to rounding, and mean pooling is invariant
       to the block scramble),
    3. a probe trained directly on per-block-key ciphertext features
       with fresh random parameters (must beat chance clearly).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cipher as ciph
from .embedding import EmbeddingParams, adapt_params, embed, random_params
from .errors import ShapeError, UsageError
from .keying import MasterKey


@dataclass(frozen=True)
class Hyper:
    learning_rate: float = 0.1
    epochs: int = 500
    batch_size: int = 32
    seed: int = 0


@dataclass
class LabeledDataset:
    """Images with integer labels and a recorded train/test partition."""

    images: np.ndarray  # (n, H, W, 3) uint8
    labels: np.ndarray  # (n,) integers in [0, num_classes)
    train_indices: np.ndarray
    test_indices: np.ndarray
    split_seed: int

    @classmethod
    def from_arrays(cls, images, labels, train_fraction=0.75, seed=0):
        images = np.asarray(images)
        labels = np.asarray(labels, dtype=np.int64)
        if images.shape[0] != labels.shape[0]:
            raise ShapeError("images and labels disagree in length")
        order = np.random.default_rng(seed).permutation(images.shape[0])
        n_train = int(round(train_fraction * images.shape[0]))
        return cls(images, labels, order[:n_train], order[n_train:], seed)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1


def featurize(image: np.ndarray, params: EmbeddingParams) -> np.ndarray:
    """Mean over the image's patch embeddings; a (D,) vector."""
    return embed(image, params).mean(axis=0)


def featurize_all(images, params: EmbeddingParams) -> np.ndarray:
    return np.stack([featurize(im, params) for im in images])


def softmax_loss_and_grads(weights, bias, features, labels):
    """Mean cross-entropy of softmax(features @ weights + bias) and its gradients."""
    n = features.shape[0]
    logits = features @ weights + bias
    logits = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(logits)
    probs = expz / expz.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))
    g = probs.copy()
    g[np.arange(n), labels] -= 1.0
    g /= n
    return loss, features.T @ g, g.sum(axis=0)


@dataclass
class LinearProbe:
    """Softmax classifier over standardized features.

    The standardization constants are fitted on the training features and
    travel with the probe, so predictions depend only on (probe, feature
    vector).
    """

    weights: np.ndarray  # (D, num_classes)
    bias: np.ndarray  # (num_classes,)
    feat_mean: np.ndarray
    feat_std: np.ndarray
    hyper: Hyper

    def _standardize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.feat_mean) / self.feat_std

    def decision_values(self, features: np.ndarray) -> np.ndarray:
        return self._standardize(features) @ self.weights + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_values(features), axis=1)


def train_on_features(
    features: np.ndarray, labels: np.ndarray, num_classes: int, hyper: Hyper
) -> LinearProbe:
    """Deterministic mini-batch SGD on softmax cross-entropy."""
    if features.shape[0] == 0:
        raise UsageError("empty training set")
    if np.unique(labels).size < 2:
        raise UsageError("training needs at least two classes")
    rng = np.random.default_rng(hyper.seed)
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std[std == 0.0] = 1.0
    x = (features - mean) / std

    d = features.shape[1]
    weights = rng.standard_normal((d, num_classes)) * 0.01
    bias = np.zeros(num_classes)
    n = x.shape[0]
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            _, gw, gb = softmax_loss_and_grads(weights, bias, x[idx], labels[idx])
            weights = weights - hyper.learning_rate * gw
            bias = bias - hyper.learning_rate * gb
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise UsageError("training diverged to non-finite parameters")
    return LinearProbe(weights, bias, mean, std, hyper)


def train(dataset: LabeledDataset, params: EmbeddingParams, hyper: Hyper) -> LinearProbe:
    feats = featurize_all(dataset.images[dataset.train_indices], params)
    return train_on_features(
        feats, dataset.labels[dataset.train_indices], dataset.num_classes, hyper
    )


def accuracy(probe: LinearProbe, features: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(probe.predict(features) == labels))


def evaluate(probe: LinearProbe, dataset: LabeledDataset, params: EmbeddingParams) -> float:
    feats = featurize_all(dataset.images[dataset.test_indices], params)
    return accuracy(probe, feats, dataset.labels[dataset.test_indices])


@dataclass
class ParityReport:
    acc_plain: float
    acc_adapted: float
    acc_encrypted_direct: float
    feature_deviation: float
    predictions_match: bool
    chance: float
    header: dict = field(default_factory=dict)

    def to_records(self) -> list[dict]:
        return [
            {"record": "header", **self.header},
            {
                "record": "parity",
                "acc_plain": self.acc_plain,
                "acc_adapted": self.acc_adapted,
                "acc_encrypted_direct": self.acc_encrypted_direct,
                "feature_deviation": self.feature_deviation,
                "predictions_match": self.predictions_match,
                "chance": self.chance,
            },
        ]

    def format_table(self) -> str:
        rows = [
            ("plain train / plain test", self.acc_plain),
            ("adapted params / uniform-key ciphertexts", self.acc_adapted),
            ("fresh params / per-block ciphertexts", self.acc_encrypted_direct),
        ]
        lines = [f"probe parity report  (chance = {self.chance:.3f})"]
        lines += [f"  {name:<42}{acc:.4f}" for name, acc in rows]
        lines.append(f"  feature deviation (arm 2 vs arm 1): {self.feature_deviation:.3e}")
        lines.append(f"  argmax predictions identical: {self.predictions_match}")
        return "\n".join(lines)


def parity_experiment(
    dataset: LabeledDataset,
    key: MasterKey,
    dim: int = 64,
    block_size: int = 16,
    hyper: Hyper | None = None,
    params_seed: int = 0,
    steps: frozenset | None = None,
    fresh_params_seed: int | None = None,
) -> ParityReport:
    """Three-arm accuracy comparison; see the module docstring.

    ``steps`` restricts the cipher steps (default all four).  Arm 3 draws
    its parameters from ``fresh_params_seed`` (default ``params_seed + 1``);
    passing ``params_seed`` instead makes a disabled cipher collapse all
    three arms onto the identical computation.
    """
    hyper = hyper or Hyper()
    if steps is None:
        steps = frozenset(ciph.ALL_STEPS)
    if fresh_params_seed is None:
        fresh_params_seed = params_seed + 1
    h, w = dataset.images.shape[1:3]
    if h % block_size or w % block_size:
        raise UsageError(f"dataset images {w}x{h} not divisible by block {block_size}")
    n_patches = (h // block_size) * (w // block_size)
    rng = np.random.default_rng(params_seed)
    params = random_params(block_size, n_patches, dim, rng)

    labels = dataset.labels
    tr, te = dataset.train_indices, dataset.test_indices

    # arm 1: plain
    feats_plain = featurize_all(dataset.images, params)
    probe = train_on_features(feats_plain[tr], labels[tr], dataset.num_classes, hyper)
    acc_plain = accuracy(probe, feats_plain[te], labels[te])

    # arm 2: uniform-key ciphertexts with key-adapted parameters, same probe
    uniform_spec = ciph.CipherSpec(block_size, ciph.Mode.UNIFORM, steps)
    adapted = adapt_params(params, key, uniform_spec)
    feats_adapted = np.stack(
        [featurize(ciph.encrypt(im, key, uniform_spec).pixels, adapted) for im in dataset.images]
    )
    feature_deviation = float(np.max(np.abs(feats_adapted - feats_plain)))
    preds_plain = probe.predict(feats_plain[te])
    preds_adapted = probe.predict(feats_adapted[te])
    predictions_match = bool(np.array_equal(preds_plain, preds_adapted))
    acc_adapted = accuracy(probe, feats_adapted[te], labels[te])

    # arm 3: per-block ciphertexts, fresh random parameters, fresh probe
    per_block_spec = ciph.CipherSpec(block_size, ciph.Mode.PER_BLOCK, steps)
    fresh = random_params(block_size, n_patches, dim, np.random.default_rng(fresh_params_seed))
    enc_images = [ciph.encrypt(im, key, per_block_spec).pixels for im in dataset.images]
    feats_enc = featurize_all(enc_images, fresh)
    probe_enc = train_on_features(feats_enc[tr], labels[tr], dataset.num_classes, hyper)
    acc_direct = accuracy(probe_enc, feats_enc[te], labels[te])

    header = {
        "dim": dim,
        "block_size": block_size,
        "num_classes": dataset.num_classes,
        "n_train": int(tr.size),
        "n_test": int(te.size),
        "params_seed": params_seed,
        "hyper": vars(hyper),
    }
    return ParityReport(
        acc_plain=acc_plain,
        acc_adapted=acc_adapted,
        acc_encrypted_direct=acc_direct,
        feature_deviation=feature_deviation,
        predictions_match=predictions_match,
        chance=1.0 / dataset.num_classes,
        header=header,
    )
