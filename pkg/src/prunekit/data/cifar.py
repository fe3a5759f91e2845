"""Bit-exact CIFAR binary format support.

CIFAR-10 records are 3073 bytes (label, 3072 pixels); CIFAR-100 records
are 3074 bytes (coarse label, fine label, 3072 pixels). Pixels are
channel-major 32x32 planes. Parsing keeps the raw values, so
serialize_records(parse) reproduces the source bytes."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from prunekit.data.dataset import Dataset, SplitData, normalization_stats
from prunekit.errors import FormatError

IMAGE_BYTES = 3 * 32 * 32
RECORD_BYTES = {"cifar10": 1 + IMAGE_BYTES, "cifar100": 2 + IMAGE_BYTES}
NUM_CLASSES = {"cifar10": 10, "cifar100": 100}

TRAIN_FILES = {
    "cifar10": [f"data_batch_{i}.bin" for i in range(1, 6)],
    "cifar100": ["train.bin"],
}
TEST_FILES = {"cifar10": ["test_batch.bin"], "cifar100": ["test.bin"]}


def parse_records(raw: bytes, fmt: str) -> SplitData:
    record = RECORD_BYTES[fmt]
    if len(raw) % record != 0:
        offset = len(raw) - len(raw) % record
        raise FormatError(
            f"{fmt} payload of {len(raw)} bytes is not a multiple of {record}; "
            f"incomplete record at byte offset {offset}"
        )
    count = len(raw) // record
    data = np.frombuffer(raw, dtype=np.uint8).reshape(count, record)
    if fmt == "cifar100":
        coarse = data[:, 0].astype(np.int64)
        fine = data[:, 1].astype(np.int64)
        pixels = data[:, 2:]
        if coarse.size and coarse.max() > 19:
            bad = int(np.argmax(coarse > 19))
            raise FormatError(f"coarse label out of range in record {bad}")
    else:
        coarse = None
        fine = data[:, 0].astype(np.int64)
        pixels = data[:, 1:]
    if fine.size and fine.max() >= NUM_CLASSES[fmt]:
        bad = int(np.argmax(fine >= NUM_CLASSES[fmt]))
        raise FormatError(f"label out of range in record {bad}")
    images = pixels.reshape(count, 3, 32, 32).copy()
    return SplitData(images=images, fine=fine, coarse=coarse)


def serialize_records(split: SplitData, fmt: str) -> bytes:
    count = len(split)
    pixels = split.images.reshape(count, IMAGE_BYTES).astype(np.uint8)
    if fmt == "cifar100":
        head = np.stack([split.coarse, split.fine], axis=1).astype(np.uint8)
    else:
        head = split.fine.reshape(count, 1).astype(np.uint8)
    return np.concatenate([head, pixels], axis=1).tobytes()


def _concat(parts: list[SplitData]) -> SplitData:
    return SplitData(
        images=np.concatenate([p.images for p in parts]),
        fine=np.concatenate([p.fine for p in parts]),
        coarse=np.concatenate([p.coarse for p in parts]) if parts[0].coarse is not None else None,
    )


def ingest_cifar(fmt: str, path) -> Dataset:
    """Parse the standard binary layout from a directory (or a single file
    treated as the training split)."""
    root = Path(path)
    if root.is_file():
        train = parse_records(root.read_bytes(), fmt)
        test = SplitData(
            images=np.zeros((0, 3, 32, 32), np.uint8), fine=np.zeros(0, np.int64),
            coarse=np.zeros(0, np.int64) if fmt == "cifar100" else None,
        )
    else:
        train_parts, test_parts = [], []
        for name in TRAIN_FILES[fmt]:
            file = root / name
            if not file.exists():
                raise FormatError(f"missing {fmt} file: {file}")
            train_parts.append(parse_records(file.read_bytes(), fmt))
        for name in TEST_FILES[fmt]:
            file = root / name
            if not file.exists():
                raise FormatError(f"missing {fmt} file: {file}")
            test_parts.append(parse_records(file.read_bytes(), fmt))
        train, test = _concat(train_parts), _concat(test_parts)
    mean, std = normalization_stats(train.images)
    return Dataset(
        name=f"{fmt}@{root.name}", format=fmt, num_classes=NUM_CLASSES[fmt],
        train=train, test=test, mean=mean, std=std,
    )
