from prunekit.ir.cost import CostReport, cost_report, count_ops, count_params, layer_params
from prunekit.ir.graph import INPUT_ID, LayerNode, ModelGraph, TensorShape, topo_sort
from prunekit.ir.schema import load_model, parse_model, save_model, serialize_model
from prunekit.ir.shapes import conv_spatial, infer_shapes

__all__ = [
    "INPUT_ID",
    "CostReport",
    "LayerNode",
    "ModelGraph",
    "TensorShape",
    "conv_spatial",
    "cost_report",
    "count_ops",
    "count_params",
    "infer_shapes",
    "layer_params",
    "load_model",
    "parse_model",
    "save_model",
    "serialize_model",
    "topo_sort",
]
