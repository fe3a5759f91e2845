"""Parameter and operation accounting.

The op census counts multiply-accumulates of Conv and Linear layers only
(1 MAC = 2 ops); BatchNorm, activations and pooling are excluded. Memory
is 4 bytes per learnable parameter (conv, BN, linear, biases included).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from prunekit.ir.graph import LayerNode, ModelGraph
from prunekit.ir.shapes import infer_shapes

BYTES_PER_PARAM = 4


@dataclass
class CostReport:
    per_layer_params: dict[str, int] = field(default_factory=dict)
    total_params: int = 0
    per_layer_ops: dict[str, int] = field(default_factory=dict)
    total_ops: int = 0

    @property
    def total_giga_ops(self) -> float:
        return self.total_ops / 1e9

    @property
    def memory_bytes(self) -> int:
        return self.total_params * BYTES_PER_PARAM


def layer_params(node: LayerNode) -> int:
    if node.kind == "Conv":
        p = node.params
        count = p["out_channels"] * (p["in_channels"] // p["groups"]) * p["kernel"] ** 2
        if p["has_bias"]:
            count += p["out_channels"]
        return count
    if node.kind == "BatchNorm":
        return 4 * node.params["channels"]
    if node.kind == "Linear":
        return node.params["in_features"] * node.params["out_features"] + node.params["out_features"]
    return 0


def _layer_ops(node: LayerNode, out_hw: tuple[int, int]) -> int:
    if node.kind == "Conv":
        p = node.params
        macs = out_hw[0] * out_hw[1] * p["out_channels"] * (p["in_channels"] // p["groups"]) * p["kernel"] ** 2
        return 2 * macs
    if node.kind == "Linear":
        return 2 * node.params["in_features"] * node.params["out_features"]
    return 0


def cost_report(graph: ModelGraph) -> CostReport:
    shapes = infer_shapes(graph)
    report = CostReport()
    for node in graph.nodes:
        params = layer_params(node)
        dims = shapes[node.id].dims
        ops = _layer_ops(node, (dims[1], dims[2]) if len(dims) == 3 else (1, 1))
        report.per_layer_params[node.id] = params
        report.per_layer_ops[node.id] = ops
        report.total_params += params
        report.total_ops += ops
    return report


def count_params(graph: ModelGraph) -> CostReport:
    return cost_report(graph)


def count_ops(graph: ModelGraph) -> CostReport:
    return cost_report(graph)
