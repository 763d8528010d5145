"""Datasets: the in-repo synthetic generator, stratified splits, and npz storage.

Images are float64, channels last, with every pixel in [0, 1]. The synthetic
generator produces smooth per-class prototype textures with additive pixel
noise; prototypes are rejection-sampled to keep classes well separated so a
small CNN can learn them and small perturbations stay inside class clusters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.images.shape[0] != self.labels.shape[0]:
            raise ConfigurationError(
                f"image count {self.images.shape[0]} != label count {self.labels.shape[0]}"
            )
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ConfigurationError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(self.images[indices], self.labels[indices])


def save_dataset(data: LabeledDataset, path) -> None:
    np.savez(path, images=data.images, labels=data.labels)


def load_dataset(path) -> LabeledDataset:
    with np.load(path) as archive:
        return LabeledDataset(archive["images"], archive["labels"])


def _smooth(img: np.ndarray, passes: int = 2) -> np.ndarray:
    """Cheap 3x3 box blur with reflected edges."""
    for _ in range(passes):
        p = np.pad(img, 1, mode="reflect")
        img = sum(
            p[1 + di:1 + di + img.shape[0], 1 + dj:1 + dj + img.shape[1]]
            for di in (-1, 0, 1) for dj in (-1, 0, 1)
        ) / 9.0
    return img


def synthetic_dataset(num_classes: int = 10, per_class: int = 40,
                      image_size: int = 8, channels: int = 1,
                      noise: float = 0.06, seed: int = 0) -> LabeledDataset:
    """Gaussian-textured class prototypes plus per-sample pixel noise.

    Prototypes are smoothed random fields rescaled into [0.2, 0.8] and
    resampled until every pair is well separated in L2, so inter-class
    distances dominate both the noise and small attack budgets.
    Deterministic given the seed.
    """
    if num_classes < 2 or per_class < 1:
        raise ConfigurationError("need >= 2 classes and >= 1 sample per class")
    rng = np.random.default_rng(seed)
    min_sep = 0.15 * image_size * np.sqrt(channels)
    protos: list[np.ndarray] = []
    attempts = 0
    while len(protos) < num_classes:
        attempts += 1
        if attempts > 200 * num_classes:
            raise ConfigurationError("could not place well-separated prototypes")
        cand = np.stack(
            [_smooth(rng.uniform(0.0, 1.0, (image_size, image_size)))
             for _ in range(channels)], axis=-1)
        lo, hi = cand.min(), cand.max()
        cand = 0.2 + 0.6 * (cand - lo) / (hi - lo) if hi > lo else np.full_like(cand, 0.5)
        if all(np.linalg.norm(cand - p) >= min_sep for p in protos):
            protos.append(cand)
    images = np.empty((num_classes * per_class, image_size, image_size, channels))
    labels = np.empty(num_classes * per_class, dtype=int)
    for c, proto in enumerate(protos):
        block = slice(c * per_class, (c + 1) * per_class)
        samples = proto[None] + rng.normal(0.0, noise, (per_class,) + proto.shape)
        images[block] = np.clip(samples, 0.0, 1.0)
        labels[block] = c
    order = rng.permutation(len(labels))
    return LabeledDataset(images[order], labels[order])


def stratified_split(data: LabeledDataset, seed: int,
                     sizes: tuple[int, int]) -> tuple[LabeledDataset, LabeledDataset]:
    """Disjoint validation/test splits preserving class proportions within +-1.

    Per-class quotas use largest-remainder rounding; membership is a seeded
    permutation within each class, so identical seeds give identical splits.
    """
    n_val, n_test = sizes
    if n_val < 0 or n_test < 0 or n_val + n_test > len(data):
        raise ConfigurationError(
            f"split sizes {sizes} exceed dataset size {len(data)}"
        )
    classes, counts = np.unique(data.labels, return_counts=True)
    total = len(data)

    def quotas(size: int) -> np.ndarray:
        exact = size * counts / total
        base = np.floor(exact).astype(int)
        short = size - base.sum()
        # ties on the fractional part resolve by class order
        order = np.argsort(-(exact - base), kind="stable")
        base[order[:short]] += 1
        return base

    q_val, q_test = quotas(n_val), quotas(n_test)
    for c, cnt, qv, qt in zip(classes, counts, q_val, q_test):
        if qv + qt > cnt:
            raise ConfigurationError(
                f"class {c} has {cnt} samples but the split requires {qv + qt}"
            )
    rng = np.random.default_rng(seed)
    val_idx, test_idx = [], []
    for c, qv, qt in zip(classes, q_val, q_test):
        members = np.flatnonzero(data.labels == c)
        members = members[rng.permutation(len(members))]
        val_idx.append(members[:qv])
        test_idx.append(members[qv:qv + qt])
    val_idx = np.concatenate(val_idx) if val_idx else np.empty(0, dtype=int)
    test_idx = np.concatenate(test_idx) if test_idx else np.empty(0, dtype=int)
    return data.subset(val_idx), data.subset(test_idx)
