"""Run configuration: one JSON document drives every command.

Top-level fields: model_path, weights_path, dataset, subset, train,
search, output_dir, seed. Dataset is either a binary CIFAR directory
({"format": "cifar100", "path": ...}) or a seeded synthetic generator
({"format": "synthetic", "num_classes": ..., "train_per_class": ...}).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from prunekit.data import Dataset, generate_synthetic, ingest_cifar, resolve_subset
from prunekit.errors import ConfigError
from prunekit.runtime import AugmentConfig, LrSchedule, TrainConfig
from prunekit.search import SearchConfig, SubsetSpec

DATASET_FORMATS = ("cifar10", "cifar100", "synthetic")


@dataclass
class RunConfig:
    model_path: Path
    output_dir: Path
    seed: int = 0
    weights_path: Path | None = None
    dataset: dict = field(default_factory=dict)
    subset: dict = field(default_factory=dict)
    train: TrainConfig | None = None
    search: SearchConfig = field(default_factory=SearchConfig)
    # testing hook: replaces the retrain-evaluate step of `search` with a
    # synthetic oracle that succeeds iff level <= threshold
    synthetic_oracle_threshold: float | None = None

    def load_dataset(self) -> Dataset:
        spec = dict(self.dataset)
        fmt = spec.pop("format", None)
        if fmt not in DATASET_FORMATS:
            raise ConfigError(f"dataset.format must be one of {DATASET_FORMATS}, got {fmt!r}")
        if fmt == "synthetic":
            spec.setdefault("seed", self.seed)
            try:
                return generate_synthetic(**spec)
            except TypeError as exc:
                raise ConfigError(f"bad synthetic generator params: {exc}") from exc
        path = spec.get("path")
        if not path:
            raise ConfigError(f"dataset.format {fmt} requires a 'path'")
        if not Path(path).exists():
            raise ConfigError(f"dataset path does not exist: {path}")
        return ingest_cifar(fmt, path)

    def resolve_subset(self, dataset: Dataset) -> SubsetSpec:
        spec = dict(self.subset)
        if "template" in spec:
            template = _load_template(spec.pop("template"))
            template.update(spec)
            spec = template
        entries = spec.get("classes")
        if not entries:
            raise ConfigError("config.subset.classes is required for subset-based commands")
        name = spec.get("name", "subset")
        return resolve_subset(dataset, entries, name, seed=self.seed)


def _load_template(name: str) -> dict:
    """Bundled subset templates ('aquatic', 'random', ...) or a file path."""
    import importlib.resources

    path = Path(name)
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    resource = importlib.resources.files("prunekit") / "templates" / f"{name}.json"
    try:
        return json.loads(resource.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"unknown subset template '{name}'") from None


def _parse_train(doc: dict, seed: int) -> TrainConfig:
    lr = doc.get("lr", {})
    schedule = LrSchedule(
        initial=lr.get("initial", 0.1),
        decay_epochs=list(lr.get("decay_epochs", [15, 25])),
        gamma=lr.get("gamma", 0.1),
    )
    aug = doc.get("augment", {})
    augment = AugmentConfig(
        crop_pad=aug.get("crop_pad", 4),
        horizontal_flip=aug.get("horizontal_flip", True),
        rotation_degrees=aug.get("rotation_degrees"),
    )
    return TrainConfig(
        epochs=doc.get("epochs", 30),
        lr_schedule=schedule,
        batch_size=doc.get("batch_size", 128),
        momentum=doc.get("momentum", 0.9),
        weight_decay=doc.get("weight_decay", 5e-4),
        seed=doc.get("seed", seed),
        augment=augment,
        val_fraction=doc.get("val_fraction", 0.2),
    )


def _parse_search(doc: dict) -> SearchConfig:
    return SearchConfig(
        level_low=doc.get("level_low", 5.0),
        level_high=doc.get("level_high", 95.0),
        level_step=doc.get("level_step", 5.0),
        level_start=doc.get("level_start", 50.0),
        finetune_epochs=doc.get("finetune_epochs", 5),
        retrain_epochs=doc.get("retrain_epochs", 25),
        ranking_scope=doc.get("ranking_scope", "global"),
        residual_policy=doc.get("residual_policy", "tie_group"),
        acceptance=doc.get("acceptance", "baseline"),
        explicit_target=doc.get("explicit_target"),
    )


def load_config(path, overrides: dict | None = None) -> RunConfig:
    file = Path(path)
    if not file.exists():
        raise ConfigError(f"config file not found: {file}")
    try:
        doc = json.loads(file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if overrides:
        doc.update({k: v for k, v in overrides.items() if v is not None})

    if "model_path" not in doc or "output_dir" not in doc:
        raise ConfigError("config requires 'model_path' and 'output_dir'")
    model_path = Path(doc["model_path"])
    if not model_path.exists():
        raise ConfigError(f"model_path does not exist: {model_path}")
    weights_path = Path(doc["weights_path"]) if doc.get("weights_path") else None
    if weights_path is not None and not weights_path.exists():
        raise ConfigError(f"weights_path does not exist: {weights_path}")

    seed = int(doc.get("seed", 0))
    search_doc = dict(doc.get("search", {}))
    oracle = search_doc.pop("synthetic_oracle_threshold", None)
    try:
        config = RunConfig(
            model_path=model_path,
            output_dir=Path(doc["output_dir"]),
            seed=seed,
            weights_path=weights_path,
            dataset=doc.get("dataset", {}),
            subset=doc.get("subset", {}),
            train=_parse_train(doc.get("train", {}), seed),
            search=_parse_search(search_doc),
            synthetic_oracle_threshold=oracle,
        )
    except Exception as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return config
