import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prunekit.errors import SchemaError, ShapeError, ValidationError
from prunekit.fixtures import FIXTURE_NAMES, build_fixture, fixture_text
from prunekit.ir import (
    ModelGraph,
    TensorShape,
    cost_report,
    count_ops,
    count_params,
    infer_shapes,
    parse_model,
    serialize_model,
)

from conftest import conv, make_node


def minimal_doc():
    return {
        "name": "mini",
        "input_shape": [3, 8, 8],
        "num_classes": 2,
        "nodes": [
            {"id": "c", "kind": "Conv", "inputs": ["input"],
             "params": {"out_channels": 4, "in_channels": 3, "kernel": 3, "padding": 1}},
            {"id": "fl", "kind": "Flatten", "inputs": ["c"], "params": {}},
            {"id": "fc", "kind": "Linear", "inputs": ["fl"],
             "params": {"in_features": 256, "out_features": 2}},
        ],
    }


class TestParse:
    def test_minimal_graph(self):
        graph = parse_model(json.dumps(minimal_doc()))
        assert len(graph.nodes) == 3
        assert graph.node("c").params["stride"] == 1  # conv defaults filled in

    def test_not_json(self):
        with pytest.raises(SchemaError):
            parse_model("{nope")

    def test_missing_field(self):
        doc = minimal_doc()
        del doc["num_classes"]
        with pytest.raises(SchemaError):
            parse_model(json.dumps(doc))

    def test_unknown_kind(self):
        doc = minimal_doc()
        doc["nodes"][0]["kind"] = "Conv3D"
        with pytest.raises(SchemaError):
            parse_model(json.dumps(doc))

    def test_unknown_param_rejected(self):
        doc = minimal_doc()
        doc["nodes"][0]["params"]["dilation"] = 2
        with pytest.raises(SchemaError):
            parse_model(json.dumps(doc))

    def test_add_channel_mismatch_is_validation_error(self):
        doc = {
            "name": "bad", "input_shape": [3, 8, 8], "num_classes": 2,
            "nodes": [
                {"id": "a", "kind": "Conv", "inputs": ["input"],
                 "params": {"out_channels": 16, "in_channels": 3, "kernel": 1}},
                {"id": "b", "kind": "Conv", "inputs": ["input"],
                 "params": {"out_channels": 32, "in_channels": 3, "kernel": 1}},
                {"id": "sum", "kind": "Add", "inputs": ["a", "b"], "params": {}},
            ],
        }
        with pytest.raises(ValidationError, match="sum"):
            parse_model(json.dumps(doc))

    def test_cycle_rejected(self):
        doc = minimal_doc()
        doc["nodes"][0]["inputs"] = ["fc"]
        with pytest.raises((SchemaError, ValidationError)):
            parse_model(json.dumps(doc))

    def test_dangling_input_rejected(self):
        doc = minimal_doc()
        doc["nodes"][1]["inputs"] = ["ghost"]
        with pytest.raises(ValidationError, match="ghost"):
            parse_model(json.dumps(doc))

    def test_bad_annotation_rejected(self):
        doc = minimal_doc()
        doc["nodes"][0]["annotations"] = ["residual_group:x"]
        with pytest.raises((SchemaError, ValidationError)):
            parse_model(json.dumps(doc))


class TestSerialize:
    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_fixture_round_trip_bytes(self, name):
        text = fixture_text(name)
        assert serialize_model(parse_model(text)) == text

    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_fixture_matches_builder(self, name):
        assert serialize_model(build_fixture(name)) == fixture_text(name)

    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_parse_serialize_parse_structural_equality(self, name):
        g1 = parse_model(fixture_text(name))
        g2 = parse_model(serialize_model(g1))
        assert g1 == g2

    def test_deterministic_bytes(self, tiny_resnet):
        assert serialize_model(tiny_resnet) == serialize_model(tiny_resnet)

    def test_empty_annotations_omitted(self):
        text = serialize_model(parse_model(json.dumps(minimal_doc())))
        doc = json.loads(text)
        assert all("annotations" not in n for n in doc["nodes"])

    def test_topological_order_independent_of_input_order(self, tiny_resnet):
        reversed_graph = tiny_resnet.with_nodes(list(reversed(tiny_resnet.nodes)))
        assert serialize_model(reversed_graph) == serialize_model(tiny_resnet)


class TestShapes:
    def test_conv_spatial_arithmetic(self):
        g = ModelGraph("t", TensorShape((3, 32, 32)), 2, (
            conv("c", "input", 16, 3, k=3, stride=1, padding=1),
        ))
        assert infer_shapes(g)["c"].dims == (16, 32, 32)

    def test_gap_collapses_spatial(self):
        g = ModelGraph("t", TensorShape((64, 8, 8)), 2, (
            make_node("g", "GlobalAvgPool", ["input"]),
        ))
        assert infer_shapes(g)["g"].dims == (64, 1, 1)

    def test_declared_in_channels_mismatch(self):
        nodes = (
            conv("a", "input", 16, 3),
            conv("b", "a", 4, 8),  # declares m=8, gets 16
        )
        with pytest.raises(ShapeError, match="b"):
            ModelGraph("t", TensorShape((3, 8, 8)), 2, nodes)
            infer_shapes(ModelGraph("t", TensorShape((3, 8, 8)), 2, nodes))

    def test_strided_conv(self):
        g = ModelGraph("t", TensorShape((3, 32, 32)), 2, (
            conv("c", "input", 8, 3, k=3, stride=2, padding=1),
        ))
        assert infer_shapes(g)["c"].dims == (8, 16, 16)  # floor((32+2-3)/2)+1

    def test_every_node_gets_a_shape(self, fixture_graph):
        shapes = infer_shapes(fixture_graph)
        assert set(shapes) == {n.id for n in fixture_graph.nodes}


class TestCosts:
    def test_conv_params_by_hand(self):
        g = ModelGraph("t", TensorShape((3, 32, 32)), 2, (
            conv("c", "input", 16, 3, k=3, padding=1),
        ))
        assert count_params(g).per_layer_params["c"] == 16 * 3 * 9 + 16 == 448

    def test_batchnorm_params(self):
        g = ModelGraph("t", TensorShape((16, 8, 8)), 2, (
            make_node("bn", "BatchNorm", ["input"], channels=16, epsilon=1e-5, momentum=0.1),
        ))
        assert count_params(g).per_layer_params["bn"] == 64

    def test_conv_ops_by_hand(self):
        g = ModelGraph("t", TensorShape((3, 32, 32)), 2, (
            conv("c", "input", 16, 3, k=3, stride=1, padding=1),
        ))
        assert count_ops(g).per_layer_ops["c"] == 2 * 32 * 32 * 16 * 3 * 9 == 884736

    def test_depthwise_ops_by_hand(self):
        g = ModelGraph("t", TensorShape((16, 8, 8)), 2, (
            conv("dw", "input", 16, 16, k=3, padding=1, groups=16, bias=False, tags=("depthwise",)),
        ))
        assert count_ops(g).per_layer_ops["dw"] == 2 * 8 * 8 * 16 * 9 == 18432

    def test_linear_params_and_ops(self):
        g = ModelGraph("t", TensorShape((4, 1, 1)), 2, (
            make_node("fl", "Flatten", ["input"]),
            make_node("fc", "Linear", ["fl"], in_features=4, out_features=10),
        ))
        report = cost_report(g)
        assert report.per_layer_params["fc"] == 4 * 10 + 10
        assert report.per_layer_ops["fc"] == 2 * 4 * 10

    def test_totals_are_sums(self, fixture_graph):
        report = cost_report(fixture_graph)
        assert report.total_params == sum(report.per_layer_params.values())
        assert report.total_ops == sum(report.per_layer_ops.values())
        assert report.memory_bytes == 4 * report.total_params


class TestGraphValidation:
    def test_depthwise_tag_required(self):
        with pytest.raises(ValidationError, match="depthwise"):
            ModelGraph("t", TensorShape((4, 8, 8)), 2, (
                conv("dw", "input", 4, 4, k=3, padding=1, groups=4, bias=False),
            ))

    def test_two_sinks_rejected(self):
        nodes = (conv("a", "input", 4, 3), conv("b", "input", 4, 3))
        with pytest.raises(ValidationError, match="output"):
            ModelGraph("t", TensorShape((3, 8, 8)), 2, nodes)

    def test_duplicate_id_rejected(self):
        nodes = (conv("a", "input", 4, 3), conv("a", "input", 4, 3))
        with pytest.raises(ValidationError, match="duplicate"):
            ModelGraph("t", TensorShape((3, 8, 8)), 2, nodes)

    def test_add_arity(self):
        nodes = (conv("a", "input", 4, 3), make_node("s", "Add", ["a"]))
        with pytest.raises(ValidationError):
            ModelGraph("t", TensorShape((3, 8, 8)), 2, nodes)


# Randomized graphs assembled from the four structural modules; round-trip
# must preserve structure exactly.
@st.composite
def random_module_graph(draw):
    num_classes = draw(st.integers(2, 10))
    widths = st.sampled_from([4, 6, 8])
    nodes = [conv("stem", "input", draw(widths), 3, bias=draw(st.booleans()))]
    src, in_ch = "stem", nodes[0].params["out_channels"]
    n_blocks = draw(st.integers(1, 3))
    for i in range(n_blocks):
        kind = draw(st.sampled_from(["plain", "residual", "fire", "mbconv"]))
        pre = f"b{i}"
        if kind == "plain":
            w = draw(widths)
            nodes += [conv(f"{pre}c", src, w, in_ch, bias=draw(st.booleans())),
                      make_node(f"{pre}r", "ReLU", [f"{pre}c"])]
            src, in_ch = f"{pre}r", w
        elif kind == "residual":
            w = draw(widths)
            gtag = f"residual_group:{i}"
            nodes += [
                conv(f"{pre}c1", src, w, in_ch, bias=False),
                make_node(f"{pre}bn1", "BatchNorm", [f"{pre}c1"], channels=w, epsilon=1e-5, momentum=0.1),
                make_node(f"{pre}r1", "ReLU", [f"{pre}bn1"]),
                conv(f"{pre}c2", f"{pre}r1", w, w, bias=False, tags=("residual_final", gtag)),
                conv(f"{pre}down", src, w, in_ch, k=1, padding=0, bias=False, tags=("residual_down", gtag)),
                make_node(f"{pre}add", "Add", [f"{pre}c2", f"{pre}down"]),
                make_node(f"{pre}out", "ReLU", [f"{pre}add"]),
            ]
            src, in_ch = f"{pre}out", w
        elif kind == "fire":
            s, e = draw(widths), draw(widths)
            nodes += [
                conv(f"{pre}sq", src, s, in_ch, k=1, padding=0, tags=("fire_squeeze",)),
                conv(f"{pre}e1", f"{pre}sq", e, s, k=1, padding=0, tags=("fire_expand",)),
                conv(f"{pre}e3", f"{pre}sq", e, s, k=3, padding=1, tags=("fire_expand",)),
                make_node(f"{pre}cat", "Concat", [f"{pre}e1", f"{pre}e3"]),
            ]
            src, in_ch = f"{pre}cat", 2 * e
        else:  # mbconv without skip
            h = in_ch * 2
            w = draw(widths)
            nodes += [
                conv(f"{pre}ex", src, h, in_ch, k=1, padding=0, bias=False),
                conv(f"{pre}dw", f"{pre}ex", h, h, k=3, padding=1, groups=h, bias=False,
                     tags=("depthwise",)),
                conv(f"{pre}pj", f"{pre}dw", w, h, k=1, padding=0, bias=False),
            ]
            src, in_ch = f"{pre}pj", w
    nodes += [
        make_node("gap", "GlobalAvgPool", [src]),
        make_node("fl", "Flatten", ["gap"]),
        make_node("fc", "Linear", ["fl"], in_features=in_ch, out_features=num_classes),
    ]
    return ModelGraph("random", TensorShape((3, 16, 16)), num_classes, tuple(nodes))


@given(random_module_graph())
@settings(max_examples=40, deadline=None)
def test_round_trip_property(graph):
    text = serialize_model(graph)
    again = parse_model(text)
    assert again == graph
    assert serialize_model(again) == text
