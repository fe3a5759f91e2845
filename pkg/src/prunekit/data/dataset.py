"""In-memory dataset representation shared by all ingestion formats.

Images stay uint8 channel-major (R plane, G plane, B plane) exactly as
parsed, so records can be reserialized bit-exactly. Normalization
statistics are computed once from the training split and reused for
every later transformation (including evaluation and subsets)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from prunekit.errors import EmptySplitError


@dataclass
class SplitData:
    images: np.ndarray  # uint8 (N, 3, H, W)
    fine: np.ndarray    # int64 (N,)
    coarse: np.ndarray | None = None  # int64 (N,), CIFAR-100 only

    def __len__(self) -> int:
        return len(self.images)

    def take(self, mask: np.ndarray) -> "SplitData":
        return SplitData(
            images=self.images[mask],
            fine=self.fine[mask],
            coarse=self.coarse[mask] if self.coarse is not None else None,
        )


@dataclass
class Dataset:
    name: str
    format: str  # "cifar10" | "cifar100" | "synthetic"
    num_classes: int
    train: SplitData
    test: SplitData
    mean: np.ndarray  # per-channel, over [0,1]-scaled training pixels
    std: np.ndarray

    def summary(self) -> dict:
        per_class = {
            int(c): int(n) for c, n in zip(*np.unique(self.train.fine, return_counts=True))
        }
        return {
            "name": self.name,
            "format": self.format,
            "num_classes": self.num_classes,
            "train_records": len(self.train),
            "test_records": len(self.test),
            "train_per_class": per_class,
            "normalization": {"mean": self.mean.tolist(), "std": self.std.tolist()},
        }


def normalization_stats(train_images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scaled = train_images.astype(np.float64) / 255.0
    mean = scaled.mean(axis=(0, 2, 3))
    std = scaled.std(axis=(0, 2, 3))
    return mean.astype(np.float32), np.maximum(std, 1e-6).astype(np.float32)


def to_arrays(split: SplitData, mean: np.ndarray, std: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized float32 images plus integer labels, ready for the runtime."""
    if len(split) == 0:
        raise EmptySplitError("split has no records")
    x = split.images.astype(np.float32) / 255.0
    x = (x - mean[None, :, None, None]) / std[None, :, None, None]
    return x, split.fine.astype(np.int64)
