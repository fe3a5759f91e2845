"""Weight transfer from the original model into the shrunk one: surviving
filter rows, surviving input columns, BN slices and flatten-expanded
Linear columns all follow the channel remap."""

from __future__ import annotations

import numpy as np

from prunekit.errors import ShapeMismatchError
from prunekit.pruning.shrink import ChannelRemap
from prunekit.runtime.weights import BN_SUFFIXES, WeightStore


def _kept(mapping: dict[int, int]) -> np.ndarray:
    return np.array(sorted(mapping), dtype=np.intp)


def transfer_weights(old: WeightStore, plan, remap: ChannelRemap) -> WeightStore:
    if remap.graph is None:
        raise ShapeMismatchError("remap is not bound to a graph")
    removals: dict[str, list[int]] = getattr(plan, "removals", plan)
    out = WeightStore()
    for node in remap.graph.nodes:
        if node.kind == "Conv":
            rows = np.array(
                [i for i in range(node.out_channels) if i not in set(removals.get(node.id, ()))],
                dtype=np.intp,
            )
            weight = old[f"{node.id}.weight"]
            if weight.shape[0] != node.out_channels:
                raise ShapeMismatchError(
                    f"'{node.id}.weight' has {weight.shape[0]} filters, graph declares {node.out_channels}"
                )
            sliced = weight[rows]
            if node.groups == 1:
                sliced = sliced[:, _kept(remap.inputs[node.id])]
            out[f"{node.id}.weight"] = np.ascontiguousarray(sliced)
            if node.has_bias:
                out[f"{node.id}.bias"] = old[f"{node.id}.bias"][rows].copy()
        elif node.kind == "BatchNorm":
            cols = _kept(remap.outputs[node.id])
            for suffix in BN_SUFFIXES:
                out[f"{node.id}.{suffix}"] = old[f"{node.id}.{suffix}"][cols].copy()
        elif node.kind == "Linear":
            cols = _kept(remap.inputs[node.id])
            out[f"{node.id}.weight"] = np.ascontiguousarray(old[f"{node.id}.weight"][:, cols])
            out[f"{node.id}.bias"] = old[f"{node.id}.bias"].copy()
    return out
