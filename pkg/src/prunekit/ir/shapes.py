"""Shape inference over the layer graph.

Feature maps are (C, H, W); Flatten and Linear outputs are 1-dim. Every
node gets a shape or a ShapeError names the first offender, in
topological order; there are no partial silent results.
"""

from __future__ import annotations

from prunekit.errors import ShapeError
from prunekit.ir.graph import INPUT_ID, LayerNode, ModelGraph, TensorShape, topo_sort


def conv_spatial(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def infer_shapes(graph: ModelGraph) -> dict[str, TensorShape]:
    shapes: dict[str, TensorShape] = {INPUT_ID: graph.input_shape}
    for node in topo_sort(graph.nodes):
        ins = [shapes[i] for i in node.inputs]
        shapes[node.id] = _node_output(node, ins)
    del shapes[INPUT_ID]
    return shapes


def _feature_map(node: LayerNode, shape: TensorShape) -> TensorShape:
    if len(shape.dims) != 3:
        raise ShapeError(f"node '{node.id}': expected a (C,H,W) input, got {shape.dims}")
    return shape


def _node_output(node: LayerNode, ins: list[TensorShape]) -> TensorShape:
    kind = node.kind
    if kind == "Conv":
        c, h, w = _feature_map(node, ins[0]).dims
        p = node.params
        if c != p["in_channels"]:
            raise ShapeError(
                f"node '{node.id}': input has {c} channels but declares in_channels={p['in_channels']}"
            )
        oh = conv_spatial(h, p["kernel"], p["stride"], p["padding"])
        ow = conv_spatial(w, p["kernel"], p["stride"], p["padding"])
        if oh < 1 or ow < 1:
            raise ShapeError(f"node '{node.id}': kernel {p['kernel']} does not fit {h}x{w} input")
        return TensorShape((p["out_channels"], oh, ow))

    if kind == "BatchNorm":
        c, h, w = _feature_map(node, ins[0]).dims
        if c != node.params["channels"]:
            raise ShapeError(
                f"node '{node.id}': input has {c} channels but declares channels={node.params['channels']}"
            )
        return ins[0]

    if kind == "ReLU":
        return ins[0]

    if kind == "MaxPool":
        c, h, w = _feature_map(node, ins[0]).dims
        k, s = node.params["kernel"], node.params["stride"]
        oh = (h - k) // s + 1
        ow = (w - k) // s + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"node '{node.id}': pool window {k} does not fit {h}x{w} input")
        return TensorShape((c, oh, ow))

    if kind == "GlobalAvgPool":
        c, _, _ = _feature_map(node, ins[0]).dims
        return TensorShape((c, 1, 1))

    if kind == "Add":
        a, b = ins
        if a.dims != b.dims:
            raise ShapeError(f"node '{node.id}': Add inputs disagree ({a.dims} vs {b.dims})")
        return a

    if kind == "Concat":
        first = _feature_map(node, ins[0]).dims
        channels = first[0]
        for other in ins[1:]:
            c, h, w = _feature_map(node, other).dims
            if (h, w) != first[1:]:
                raise ShapeError(f"node '{node.id}': Concat spatial dims disagree ({first} vs {other.dims})")
            channels += c
        return TensorShape((channels, first[1], first[2]))

    if kind == "Flatten":
        return TensorShape((ins[0].numel(),))

    if kind == "Linear":
        if len(ins[0].dims) != 1:
            raise ShapeError(f"node '{node.id}': Linear expects a flat input, got {ins[0].dims}")
        if ins[0].dims[0] != node.params["in_features"]:
            raise ShapeError(
                f"node '{node.id}': input has {ins[0].dims[0]} features "
                f"but declares in_features={node.params['in_features']}"
            )
        return TensorShape((node.params["out_features"],))

    raise ShapeError(f"node '{node.id}': no shape rule for kind '{kind}'")
