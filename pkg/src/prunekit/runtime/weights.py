"""Named tensor store plus the on-disk checkpoint container.

Container layout: one newline-terminated JSON manifest line listing
(name, dtype "f32", shape, byte offset, byte length), followed by a
single raw blob of little-endian IEEE-754 values in manifest order.
Offsets are relative to the start of the blob.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from prunekit.errors import MissingWeightError, ShapeMismatchError
from prunekit.ir import ModelGraph

BN_SUFFIXES = ("gamma", "beta", "running_mean", "running_var")


@dataclass
class WeightStore:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise MissingWeightError(f"no tensor named '{name}'") from None

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.tensors[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def copy(self) -> "WeightStore":
        return WeightStore({k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "WeightStore":
        return WeightStore({k: v.astype(dtype) for k, v in self.tensors.items()})

    def allclose(self, other: "WeightStore", atol: float = 0.0) -> bool:
        if set(self.tensors) != set(other.tensors):
            return False
        return all(
            v.shape == other.tensors[k].shape and np.allclose(v, other.tensors[k], atol=atol, rtol=0.0)
            for k, v in self.tensors.items()
        )


def expected_tensor_shapes(graph: ModelGraph) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for node in graph.nodes:
        if node.kind == "Conv":
            p = node.params
            shapes[f"{node.id}.weight"] = (
                p["out_channels"], p["in_channels"] // p["groups"], p["kernel"], p["kernel"],
            )
            if p["has_bias"]:
                shapes[f"{node.id}.bias"] = (p["out_channels"],)
        elif node.kind == "Linear":
            p = node.params
            shapes[f"{node.id}.weight"] = (p["out_features"], p["in_features"])
            shapes[f"{node.id}.bias"] = (p["out_features"],)
        elif node.kind == "BatchNorm":
            for suffix in BN_SUFFIXES:
                shapes[f"{node.id}.{suffix}"] = (node.params["channels"],)
    return shapes


def validate_weights(graph: ModelGraph, weights: WeightStore) -> None:
    for name, shape in expected_tensor_shapes(graph).items():
        if name not in weights:
            raise MissingWeightError(f"graph '{graph.name}' expects tensor '{name}'")
        actual = weights[name].shape
        if tuple(actual) != shape:
            raise ShapeMismatchError(f"tensor '{name}': expected shape {shape}, got {tuple(actual)}")


def init_weights(graph: ModelGraph, seed: int) -> WeightStore:
    """He-normal conv/linear weights, zero biases, identity BN."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(11,)))
    store = WeightStore()
    for name, shape in expected_tensor_shapes(graph).items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            std = np.sqrt(2.0 / fan_in)
            store[name] = rng.normal(0.0, std, size=shape).astype(np.float32)
        elif name.endswith(".bias") or name.endswith(".beta") or name.endswith(".running_mean"):
            store[name] = np.zeros(shape, dtype=np.float32)
        else:  # gamma, running_var
            store[name] = np.ones(shape, dtype=np.float32)
    return store


def save_weights(weights: WeightStore, path) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in weights.names():
        data = np.ascontiguousarray(weights[name], dtype="<f4")
        raw = data.tobytes()
        entries.append({
            "name": name,
            "dtype": "f32",
            "shape": list(data.shape),
            "offset": offset,
            "length": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    manifest = json.dumps({"tensors": entries}, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(manifest.encode("utf-8") + b"\n")
        for raw in blobs:
            fh.write(raw)


def load_weights(path) -> WeightStore:
    with open(path, "rb") as fh:
        header = fh.readline()
        blob = fh.read()
    try:
        manifest = json.loads(header.decode("utf-8"))
        entries = manifest["tensors"]
    except (ValueError, KeyError) as exc:
        raise ShapeMismatchError(f"bad weight container manifest in {path}: {exc}") from exc
    store = WeightStore()
    for entry in entries:
        start, length = entry["offset"], entry["length"]
        raw = blob[start:start + length]
        if len(raw) != length:
            raise ShapeMismatchError(f"weight container truncated at tensor '{entry['name']}'")
        data = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
        store[entry["name"]] = data.astype(np.float32)
    return store
