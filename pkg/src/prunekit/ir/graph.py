"""Core graph types: layer nodes, model graph, structural validation.

The graph is a DAG of typed layers. The reserved producer id ``input``
denotes the single image input; exactly one node may have no consumers
(the graph output). Graphs are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from prunekit.errors import ValidationError

INPUT_ID = "input"

LAYER_KINDS = (
    "Conv",
    "BatchNorm",
    "ReLU",
    "MaxPool",
    "GlobalAvgPool",
    "Linear",
    "Add",
    "Concat",
    "Flatten",
)

# Tags a node may carry; residual groups use "residual_group:<int>".
ANNOTATION_TAGS = (
    "residual_final",
    "residual_down",
    "depthwise",
    "fire_squeeze",
    "fire_expand",
    "plain",
)

REQUIRED_PARAMS = {
    "Conv": ("out_channels", "in_channels", "kernel", "stride", "padding", "groups", "has_bias"),
    "BatchNorm": ("channels", "epsilon", "momentum"),
    "MaxPool": ("kernel", "stride"),
    "Linear": ("in_features", "out_features"),
    "ReLU": (),
    "GlobalAvgPool": (),
    "Add": (),
    "Concat": (),
    "Flatten": (),
}

CONV_PARAM_DEFAULTS = {"stride": 1, "padding": 0, "groups": 1, "has_bias": True}


@dataclass(frozen=True)
class TensorShape:
    """Positive dims; (C, H, W) for feature maps, (n, m, k, k) for conv weights."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if not self.dims or any(d < 1 for d in self.dims):
            raise ValidationError(f"all dims must be >= 1, got {self.dims}")

    @property
    def channels(self) -> int:
        return self.dims[0]

    def numel(self) -> int:
        n = 1
        for d in self.dims:
            n *= d
        return n


@dataclass(frozen=True)
class LayerNode:
    id: str
    kind: str
    inputs: tuple[str, ...]
    params: dict = field(default_factory=dict)
    annotations: frozenset[str] = frozenset()

    # Conv accessors (raise KeyError on other kinds, by design)
    @property
    def out_channels(self) -> int:
        return self.params["out_channels"]

    @property
    def in_channels(self) -> int:
        return self.params["in_channels"]

    @property
    def kernel(self) -> int:
        return self.params["kernel"]

    @property
    def groups(self) -> int:
        return self.params["groups"]

    @property
    def has_bias(self) -> bool:
        return self.params["has_bias"]

    def is_depthwise(self) -> bool:
        return self.kind == "Conv" and "depthwise" in self.annotations

    def residual_group(self) -> int | None:
        for tag in self.annotations:
            if tag.startswith("residual_group:"):
                return int(tag.split(":", 1)[1])
        return None


@dataclass(frozen=True, eq=False)
class ModelGraph:
    name: str
    input_shape: TensorShape
    num_classes: int
    nodes: tuple[LayerNode, ...]

    def __post_init__(self):
        validate_graph(self)

    def __eq__(self, other) -> bool:
        """Structural equality: node storage order is not semantic."""
        if not isinstance(other, ModelGraph):
            return NotImplemented
        return (
            self.name == other.name
            and self.input_shape == other.input_shape
            and self.num_classes == other.num_classes
            and sorted(self.nodes, key=lambda n: n.id) == sorted(other.nodes, key=lambda n: n.id)
        )

    __hash__ = None

    def node(self, node_id: str) -> LayerNode:
        return self._by_id[node_id]

    @property
    def _by_id(self) -> dict[str, LayerNode]:
        # cached on first use; object.__setattr__ because the dataclass is frozen
        cache = self.__dict__.get("_by_id_cache")
        if cache is None:
            cache = {n.id: n for n in self.nodes}
            object.__setattr__(self, "_by_id_cache", cache)
        return cache

    def consumers(self, node_id: str) -> list[LayerNode]:
        return [n for n in self.nodes if node_id in n.inputs]

    def output_node(self) -> LayerNode:
        consumed = {i for n in self.nodes for i in n.inputs}
        sinks = [n for n in self.nodes if n.id not in consumed]
        return sinks[0]

    def with_nodes(self, nodes: list[LayerNode]) -> "ModelGraph":
        return replace(self, nodes=tuple(nodes))


def topo_sort(nodes: tuple[LayerNode, ...]) -> list[LayerNode]:
    """Kahn's algorithm with lexicographic tie-break, so the order is
    deterministic and independent of the input node order."""
    by_id = {n.id: n for n in nodes}
    indeg = {n.id: sum(1 for i in n.inputs if i in by_id) for n in nodes}
    ready = sorted(nid for nid, d in indeg.items() if d == 0)
    order: list[LayerNode] = []
    while ready:
        nid = ready.pop(0)
        order.append(by_id[nid])
        opened = []
        for consumer in nodes:
            if nid in consumer.inputs:
                indeg[consumer.id] -= consumer.inputs.count(nid)
                if indeg[consumer.id] == 0:
                    opened.append(consumer.id)
        if opened:
            ready = sorted(ready + opened)
    if len(order) != len(nodes):
        stuck = sorted(set(by_id) - {n.id for n in order})
        raise ValidationError(f"graph contains a cycle involving node '{stuck[0]}'")
    return order


def validate_graph(graph: ModelGraph) -> None:
    """Reject inconsistent graphs outright; nothing is silently repaired."""
    if len(graph.input_shape.dims) != 3:
        raise ValidationError(f"input_shape must have 3 dims, got {graph.input_shape.dims}")
    if graph.num_classes < 1:
        raise ValidationError("num_classes must be positive")
    if not graph.nodes:
        raise ValidationError("graph has no nodes")

    seen: set[str] = set()
    for node in graph.nodes:
        if node.id == INPUT_ID:
            raise ValidationError(f"node id '{INPUT_ID}' is reserved")
        if node.id in seen:
            raise ValidationError(f"duplicate node id '{node.id}'")
        seen.add(node.id)
        if node.kind not in LAYER_KINDS:
            raise ValidationError(f"node '{node.id}': unknown kind '{node.kind}'")

    for node in graph.nodes:
        for producer in node.inputs:
            if producer != INPUT_ID and producer not in seen:
                raise ValidationError(f"node '{node.id}': dangling input '{producer}'")
        _validate_node(node)

    if not any(INPUT_ID in n.inputs for n in graph.nodes):
        raise ValidationError("no node consumes the graph input")

    consumed = {i for n in graph.nodes for i in n.inputs}
    sinks = [n.id for n in graph.nodes if n.id not in consumed]
    if len(sinks) != 1:
        raise ValidationError(f"graph must have exactly one output, found {sorted(sinks)}")

    topo_sort(graph.nodes)  # raises on cycles
    _validate_residual_tags(graph)


def _validate_node(node: LayerNode) -> None:
    for key in REQUIRED_PARAMS[node.kind]:
        if key not in node.params:
            raise ValidationError(f"node '{node.id}': missing param '{key}'")
    for tag in node.annotations:
        base = tag.split(":", 1)[0]
        if base == "residual_group":
            try:
                int(tag.split(":", 1)[1])
            except (IndexError, ValueError):
                raise ValidationError(f"node '{node.id}': bad annotation '{tag}'") from None
        elif tag not in ANNOTATION_TAGS:
            raise ValidationError(f"node '{node.id}': bad annotation '{tag}'")

    n_inputs = len(node.inputs)
    if node.kind == "Add":
        if n_inputs != 2:
            raise ValidationError(f"node '{node.id}': Add requires exactly 2 inputs")
    elif node.kind == "Concat":
        if n_inputs < 2:
            raise ValidationError(f"node '{node.id}': Concat requires >= 2 inputs")
    elif n_inputs != 1:
        raise ValidationError(f"node '{node.id}': {node.kind} requires exactly 1 input")

    if node.kind == "Conv":
        p = node.params
        for key in ("out_channels", "in_channels", "kernel", "stride", "groups"):
            if p[key] < 1:
                raise ValidationError(f"node '{node.id}': {key} must be >= 1")
        if p["padding"] < 0:
            raise ValidationError(f"node '{node.id}': padding must be >= 0")
        if p["in_channels"] % p["groups"] != 0 or p["out_channels"] % p["groups"] != 0:
            raise ValidationError(f"node '{node.id}': groups must divide channel counts")
        dw_shaped = p["groups"] == p["in_channels"] and p["in_channels"] // p["groups"] == 1 and p["groups"] > 1
        if dw_shaped and "depthwise" not in node.annotations:
            raise ValidationError(f"node '{node.id}': depthwise-shaped conv must carry the depthwise tag")
        if "depthwise" in node.annotations:
            # Filter count must equal the incoming feature-map count, one group per map.
            if not (p["groups"] == p["in_channels"] == p["out_channels"]):
                raise ValidationError(
                    f"node '{node.id}': depthwise conv requires out_channels == in_channels == groups"
                )
    elif node.kind == "BatchNorm":
        if node.params["channels"] < 1:
            raise ValidationError(f"node '{node.id}': channels must be >= 1")
    elif node.kind == "MaxPool":
        if node.params["kernel"] < 1 or node.params["stride"] < 1:
            raise ValidationError(f"node '{node.id}': kernel and stride must be >= 1")
    elif node.kind == "Linear":
        if node.params["in_features"] < 1 or node.params["out_features"] < 1:
            raise ValidationError(f"node '{node.id}': features must be >= 1")


def _validate_residual_tags(graph: ModelGraph) -> None:
    """residual_final / residual_down must carry a shared group id."""
    groups: dict[int, dict[str, list[str]]] = {}
    for node in graph.nodes:
        tags = node.annotations
        has_role = "residual_final" in tags or "residual_down" in tags
        gid = node.residual_group()
        if has_role and gid is None:
            raise ValidationError(f"node '{node.id}': residual tag without residual_group:<gid>")
        if gid is not None:
            if node.kind != "Conv":
                raise ValidationError(f"node '{node.id}': residual_group on non-Conv node")
            if not has_role:
                raise ValidationError(f"node '{node.id}': residual_group without a final/down role")
            entry = groups.setdefault(gid, {"final": [], "down": []})
            if "residual_final" in tags:
                entry["final"].append(node.id)
            if "residual_down" in tags:
                entry["down"].append(node.id)
    for gid, entry in groups.items():
        if len(entry["down"]) > 1:
            raise ValidationError(f"residual group {gid}: more than one residual_down")
