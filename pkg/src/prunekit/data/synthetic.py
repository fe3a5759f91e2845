"""Seeded synthetic image datasets in the CIFAR pixel layout.

Classes are multimodal: each class owns several alternative blocky
color templates (variants) over a shared background, and every sample
draws one variant plus brightness jitter and Gaussian noise. Separating
many classes therefore needs a detector per variant, which makes class
count genuinely pressure model capacity; a heavily pruned model can
still learn a few classes well but not all of them. The same seed
yields bit-identical datasets, so end-to-end pipelines are reproducible
without shipping real data."""

from __future__ import annotations

import numpy as np

from prunekit.data.dataset import Dataset, SplitData, normalization_stats


def _blocky(rng: np.random.Generator, shape: tuple[int, ...], size: int, cells: int) -> np.ndarray:
    coarse = rng.uniform(-1.0, 1.0, size=(*shape, cells, cells))
    reps = -(-size // cells)  # ceil
    return np.kron(coarse, np.ones((1,) * len(shape) + (reps, reps)))[..., :size, :size]


def _prototypes(
    rng: np.random.Generator,
    num_classes: int,
    variants: int,
    size: int,
    base_cells: int,
    amplitude: float,
) -> np.ndarray:
    base = 128.0 + 45.0 * _blocky(rng, (3,), size, base_cells)
    return base[None, None] + amplitude * _blocky(rng, (num_classes, variants, 3), size, base_cells)


def _sample_split(
    rng: np.random.Generator,
    protos: np.ndarray,
    per_class: int,
    noise: float,
) -> SplitData:
    num_classes, variants = protos.shape[:2]
    images = []
    labels = []
    for cls in range(num_classes):
        chosen = rng.integers(0, variants, per_class)
        brightness = rng.uniform(-25.0, 25.0, size=(per_class, 1, 1, 1))
        jitter = rng.normal(0.0, noise, size=(per_class, *protos.shape[2:]))
        batch = protos[cls, chosen] + brightness + jitter
        images.append(np.clip(batch, 0, 255).astype(np.uint8))
        labels.append(np.full(per_class, cls, dtype=np.int64))
    return SplitData(images=np.concatenate(images), fine=np.concatenate(labels))


def generate_synthetic(
    num_classes: int = 10,
    train_per_class: int = 100,
    test_per_class: int = 30,
    seed: int = 0,
    image_size: int = 32,
    noise: float = 28.0,
    base_cells: int = 4,
    variants: int = 3,
    variant_amplitude: float = 30.0,
) -> Dataset:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(41,)))
    protos = _prototypes(rng, num_classes, variants, image_size, base_cells, variant_amplitude)
    train = _sample_split(rng, protos, train_per_class, noise)
    test = _sample_split(rng, protos, test_per_class, noise)
    mean, std = normalization_stats(train.images)
    return Dataset(
        name=f"synthetic-{num_classes}x{train_per_class}-s{seed}",
        format="synthetic",
        num_classes=num_classes,
        train=train,
        test=test,
        mean=mean,
        std=std,
    )
