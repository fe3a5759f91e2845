"""Train-time data augmentation: reflect-pad random crop, horizontal flip,
optional nearest-neighbor rotation. Draws are independent per sample."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AugmentConfig:
    crop_pad: int | None = 4
    horizontal_flip: bool = True
    rotation_degrees: float | None = None

    @property
    def enabled(self) -> bool:
        return bool(self.crop_pad) or self.horizontal_flip or self.rotation_degrees is not None


def crop_sample(img: np.ndarray, pad: int, top: int, left: int) -> np.ndarray:
    h, w = img.shape[1], img.shape[2]
    padded = np.pad(img, ((0, 0), (pad, pad), (pad, pad)), mode="reflect")
    return padded[:, top:top + h, left:left + w]


def flip_sample(img: np.ndarray) -> np.ndarray:
    return img[:, :, ::-1]


def rotate_sample(img: np.ndarray, degrees: float) -> np.ndarray:
    """Nearest-neighbor rotation about the image center; coordinates falling
    outside the source are clamped to the nearest edge pixel."""
    h, w = img.shape[1], img.shape[2]
    theta = np.deg2rad(degrees)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w]
    yr = np.cos(theta) * (ys - cy) - np.sin(theta) * (xs - cx) + cy
    xr = np.sin(theta) * (ys - cy) + np.cos(theta) * (xs - cx) + cx
    yi = np.clip(np.rint(yr).astype(np.intp), 0, h - 1)
    xi = np.clip(np.rint(xr).astype(np.intp), 0, w - 1)
    return img[:, yi, xi]


def augment(batch: np.ndarray, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    if not config.enabled:
        return batch
    out = np.empty_like(batch)
    pad = config.crop_pad or 0
    for i in range(len(batch)):
        img = batch[i]
        if pad:
            top, left = rng.integers(0, 2 * pad + 1, size=2)
            img = crop_sample(img, pad, int(top), int(left))
        if config.horizontal_flip and rng.random() < 0.5:
            img = flip_sample(img)
        if config.rotation_degrees is not None:
            angle = rng.uniform(-config.rotation_degrees, config.rotation_degrees)
            img = rotate_sample(img, float(angle))
        out[i] = img
    return out
