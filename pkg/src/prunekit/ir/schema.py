"""Model document (de)serialization.

The on-disk form is a JSON object with ``name``, ``input_shape`` [c,h,w],
``num_classes`` and ``nodes``. Canonical output is UTF-8, two-space
indented, keys sorted, nodes in deterministic topological order, optional
params written explicitly and empty annotation lists omitted, so two
serializations of the same graph are byte-identical.
"""

from __future__ import annotations

import json

from prunekit.errors import SchemaError
from prunekit.ir.graph import (
    CONV_PARAM_DEFAULTS,
    LAYER_KINDS,
    REQUIRED_PARAMS,
    LayerNode,
    ModelGraph,
    TensorShape,
    topo_sort,
)
from prunekit.ir.shapes import infer_shapes

_INT_PARAMS = {
    "out_channels", "in_channels", "kernel", "stride", "padding", "groups",
    "channels", "in_features", "out_features",
}
_FLOAT_PARAMS = {"epsilon", "momentum"}


def parse_model(text: str) -> ModelGraph:
    """Parse and fully validate a model document (structure and shapes)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    for key in ("name", "input_shape", "num_classes", "nodes"):
        if key not in doc:
            raise SchemaError(f"missing top-level field '{key}'")
    if not isinstance(doc["name"], str):
        raise SchemaError("'name' must be a string")
    shape = doc["input_shape"]
    if not (isinstance(shape, list) and len(shape) == 3 and all(isinstance(d, int) for d in shape)):
        raise SchemaError(f"'input_shape' must be [c, h, w] integers, got {shape!r}")
    if not isinstance(doc["num_classes"], int):
        raise SchemaError("'num_classes' must be an integer")
    if not isinstance(doc["nodes"], list) or not doc["nodes"]:
        raise SchemaError("'nodes' must be a non-empty array")

    nodes = tuple(_parse_node(entry) for entry in doc["nodes"])
    graph = ModelGraph(
        name=doc["name"],
        input_shape=TensorShape(tuple(shape)),
        num_classes=doc["num_classes"],
        nodes=nodes,
    )
    infer_shapes(graph)  # ShapeError is a ValidationError; parse rejects unshapeable graphs
    return graph


def _parse_node(entry) -> LayerNode:
    if not isinstance(entry, dict):
        raise SchemaError(f"node entries must be objects, got {entry!r}")
    for key in ("id", "kind", "inputs", "params"):
        if key not in entry:
            raise SchemaError(f"node {entry.get('id', '?')!r}: missing field '{key}'")
    nid, kind = entry["id"], entry["kind"]
    if not isinstance(nid, str) or not nid:
        raise SchemaError(f"node id must be a non-empty string, got {nid!r}")
    if kind not in LAYER_KINDS:
        raise SchemaError(f"node '{nid}': unknown kind '{kind}'")
    if not isinstance(entry["inputs"], list) or not all(isinstance(i, str) for i in entry["inputs"]):
        raise SchemaError(f"node '{nid}': 'inputs' must be an array of ids")
    raw = entry["params"]
    if not isinstance(raw, dict):
        raise SchemaError(f"node '{nid}': 'params' must be an object")

    params = dict(raw)
    if kind == "Conv":
        for key, default in CONV_PARAM_DEFAULTS.items():
            params.setdefault(key, default)
    for key in REQUIRED_PARAMS[kind]:
        if key not in params:
            raise SchemaError(f"node '{nid}': missing param '{key}'")
    for key in set(params) - set(REQUIRED_PARAMS[kind]):
        raise SchemaError(f"node '{nid}': unknown param '{key}' for kind {kind}")
    for key, value in params.items():
        if key in _INT_PARAMS and not isinstance(value, int):
            raise SchemaError(f"node '{nid}': param '{key}' must be an integer")
        if key in _FLOAT_PARAMS and not isinstance(value, (int, float)):
            raise SchemaError(f"node '{nid}': param '{key}' must be a number")
        if key == "has_bias" and not isinstance(value, bool):
            raise SchemaError(f"node '{nid}': param 'has_bias' must be a boolean")

    annotations = entry.get("annotations", [])
    if not isinstance(annotations, list) or not all(isinstance(a, str) for a in annotations):
        raise SchemaError(f"node '{nid}': 'annotations' must be an array of strings")
    return LayerNode(
        id=nid,
        kind=kind,
        inputs=tuple(entry["inputs"]),
        params=params,
        annotations=frozenset(annotations),
    )


def serialize_model(graph: ModelGraph) -> str:
    doc = {
        "name": graph.name,
        "input_shape": list(graph.input_shape.dims),
        "num_classes": graph.num_classes,
        "nodes": [_node_entry(n) for n in topo_sort(graph.nodes)],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _node_entry(node: LayerNode) -> dict:
    entry = {
        "id": node.id,
        "kind": node.kind,
        "inputs": list(node.inputs),
        "params": {k: node.params[k] for k in sorted(node.params)},
    }
    if node.annotations:
        entry["annotations"] = sorted(node.annotations)
    return entry


def load_model(path) -> ModelGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def save_model(graph: ModelGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_model(graph))
