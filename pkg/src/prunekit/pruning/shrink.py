"""Model shrinking: apply a prune plan to produce a standalone smaller
graph plus the channel remapping needed to transfer weights.

Shrinking is mechanical: each conv keeps its surviving filters, each
consumer keeps the input positions whose defining filters survive.
Nothing is repaired; a plan violating the dependency constraints yields
a graph that fails validation or shape inference.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from prunekit.deps import channel_sources
from prunekit.errors import ShapeError
from prunekit.ir import INPUT_ID, LayerNode, ModelGraph, infer_shapes, topo_sort


@dataclass
class ChannelRemap:
    """Strictly increasing old-index -> new-index maps for survivors.

    ``outputs`` covers every node's output positions (Flatten entries are
    feature slots, already H*W expanded); ``inputs`` covers the input
    positions of weight-bearing consumers (Conv channels, Linear features).
    """

    outputs: dict[str, dict[int, int]] = field(default_factory=dict)
    inputs: dict[str, dict[int, int]] = field(default_factory=dict)
    graph: ModelGraph | None = None


def shrink_graph(graph: ModelGraph, plan) -> tuple[ModelGraph, ChannelRemap]:
    removals: dict[str, list[int]] = getattr(plan, "removals", plan)
    for layer, indices in removals.items():
        node = graph.node(layer)
        if node.kind != "Conv":
            raise ShapeError(f"plan removes filters of non-Conv node '{layer}'")
        bad = [i for i in indices if not 0 <= i < node.out_channels]
        if bad:
            raise ShapeError(f"plan entry '{layer}': filter index {bad[0]} out of range")

    sources = channel_sources(graph)
    removed = {layer: set(indices) for layer, indices in removals.items()}

    def alive(entries) -> bool:
        return all(idx not in removed.get(src, ()) for src, idx in entries)

    survivor_map: dict[str, dict[int, int]] = {}
    for node_id, positions in sources.items():
        if node_id == INPUT_ID:
            continue
        kept = [pos for pos, entries in enumerate(positions) if alive(entries)]
        survivor_map[node_id] = {old: new for new, old in enumerate(kept)}

    def live_in(node: LayerNode) -> int:
        if node.inputs[0] == INPUT_ID:
            return graph.input_shape.channels
        return len(survivor_map[node.inputs[0]])

    remap = ChannelRemap(outputs=survivor_map, graph=graph)
    new_nodes: list[LayerNode] = []
    for node in topo_sort(graph.nodes):
        params = dict(node.params)
        if node.kind == "Conv":
            kept_own = [i for i in range(node.out_channels) if i not in removed.get(node.id, ())]
            params["out_channels"] = len(kept_own)
            params["in_channels"] = live_in(node)
            if node.groups > 1:
                params["groups"] = params["in_channels"]
            if node.inputs[0] != INPUT_ID:
                remap.inputs[node.id] = survivor_map[node.inputs[0]]
            else:
                remap.inputs[node.id] = {c: c for c in range(graph.input_shape.channels)}
        elif node.kind == "BatchNorm":
            params["channels"] = live_in(node)
        elif node.kind == "Linear":
            params["in_features"] = live_in(node)
            remap.inputs[node.id] = survivor_map[node.inputs[0]]
        new_nodes.append(replace(node, params=params))

    shrunk = graph.with_nodes(new_nodes)  # validation may raise on inconsistent plans
    infer_shapes(shrunk)
    return shrunk, remap
