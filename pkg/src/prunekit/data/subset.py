"""Deployment-subset construction: filter a dataset down to chosen fine
classes. Selections may list fine class ids directly, expand a CIFAR-100
coarse class by name or id ("coarse:fish", "coarse:3"), or draw k random
fine classes with the run seed ("random:8")."""

from __future__ import annotations

import numpy as np

from prunekit.data.dataset import Dataset
from prunekit.errors import UnknownClassError
from prunekit.search.config import SubsetSpec

# Coarse class names in label order, from the published CIFAR-100 metadata.
CIFAR100_COARSE_NAMES = (
    "aquatic_mammals", "fish", "flowers", "food_containers",
    "fruit_and_vegetables", "household_electrical_devices",
    "household_furniture", "insects", "large_carnivores",
    "large_man-made_outdoor_things", "large_natural_outdoor_scenes",
    "large_omnivores_and_herbivores", "medium_mammals",
    "non-insect_invertebrates", "people", "reptiles", "small_mammals",
    "trees", "vehicles_1", "vehicles_2",
)


def coarse_to_fine(dataset: Dataset) -> dict[int, list[int]]:
    """Observed coarse -> fine id mapping from the training records."""
    if dataset.train.coarse is None:
        raise UnknownClassError(f"dataset '{dataset.name}' has no coarse labels")
    mapping: dict[int, set[int]] = {}
    for coarse, fine in zip(dataset.train.coarse.tolist(), dataset.train.fine.tolist()):
        mapping.setdefault(coarse, set()).add(fine)
    return {c: sorted(f) for c, f in mapping.items()}


def resolve_subset(dataset: Dataset, entries: list, name: str, seed: int = 0) -> SubsetSpec:
    class_ids: set[int] = set()
    for entry in entries:
        if isinstance(entry, int):
            class_ids.add(entry)
        elif isinstance(entry, str) and entry.startswith("coarse:"):
            key = entry.split(":", 1)[1]
            if key.isdigit():
                coarse_id = int(key)
            elif key in CIFAR100_COARSE_NAMES:
                coarse_id = CIFAR100_COARSE_NAMES.index(key)
            else:
                raise UnknownClassError(f"unknown coarse class '{key}'")
            mapping = coarse_to_fine(dataset)
            if coarse_id not in mapping:
                raise UnknownClassError(f"coarse class {coarse_id} absent from dataset")
            class_ids.update(mapping[coarse_id])
        elif isinstance(entry, str) and entry.startswith("random:"):
            k = int(entry.split(":", 1)[1])
            if k < 1 or k > dataset.num_classes:
                raise UnknownClassError(f"cannot draw {k} classes from {dataset.num_classes}")
            rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(53,)))
            class_ids.update(int(c) for c in rng.choice(dataset.num_classes, size=k, replace=False))
        elif isinstance(entry, str) and entry.isdigit():
            class_ids.add(int(entry))
        else:
            raise UnknownClassError(f"unparseable class selector {entry!r}")
    for cid in class_ids:
        if not 0 <= cid < dataset.num_classes:
            raise UnknownClassError(f"class id {cid} outside [0, {dataset.num_classes})")
    return SubsetSpec(name=name, class_ids=frozenset(class_ids))


def subset(dataset: Dataset, spec: SubsetSpec) -> Dataset:
    """Records whose fine label belongs to the spec; normalization
    statistics stay those of the parent training split."""
    missing = spec.class_ids - set(range(dataset.num_classes))
    if missing:
        raise UnknownClassError(f"classes {sorted(missing)} absent from '{dataset.name}'")
    ids = np.array(spec.sorted_ids())
    return Dataset(
        name=f"{dataset.name}/{spec.name}",
        format=dataset.format,
        num_classes=dataset.num_classes,
        train=dataset.train.take(np.isin(dataset.train.fine, ids)),
        test=dataset.test.take(np.isin(dataset.test.fine, ids)),
        mean=dataset.mean,
        std=dataset.std,
    )
