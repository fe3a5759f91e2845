import numpy as np
import pytest

from prunekit.deps import (
    channel_sources,
    compute_dependencies,
    validate_plan_against_deps,
)
from prunekit.errors import DependencyError, ValidationError
from prunekit.ir import INPUT_ID, ModelGraph, TensorShape, infer_shapes

from conftest import conv, corrupt_plan, make_node, random_respecting_plan


def head(src, in_ch, num_classes=2):
    return [
        make_node("gap", "GlobalAvgPool", [src]),
        make_node("fl", "Flatten", ["gap"]),
        make_node("fc", "Linear", ["fl"], in_features=in_ch, out_features=num_classes),
    ]


class TestFixtureSets:
    def test_alexnet_sequential_no_dependencies(self, tiny_alexnet):
        assert compute_dependencies(tiny_alexnet).sets == []

    def test_squeezenet_fire_no_dependencies(self, tiny_squeezenet):
        assert compute_dependencies(tiny_squeezenet).sets == []

    def test_resnet_group_ties_three_members(self, tiny_resnet):
        depmap = compute_dependencies(tiny_resnet, "tie_group")
        g0 = [d for d in depmap.sets if d.group_id == 0]
        assert len(g0) == 1
        assert g0[0].sorted_members() == ["g0_down", "g0b0_conv2", "g0b1_conv2"]
        assert g0[0].coupling == "residual"
        assert len(depmap.sets) == 3  # one per group

    def test_mobilenet_depthwise_and_skip_sets(self, tiny_mobilenet):
        depmap = compute_dependencies(tiny_mobilenet)
        members = {tuple(d.sorted_members()): d.coupling for d in depmap.sets}
        assert members[("b0_dw", "b0_expand")] == "depthwise"
        assert members[("b0_project", "b1_project")] == "residual"
        assert members[("b2_project", "b3_project")] == "residual"

    def test_no_two_sets_share_a_member(self, fixture_graph):
        depmap = compute_dependencies(fixture_graph)
        seen = set()
        for dep in depmap.sets:
            assert not (dep.members & seen)
            seen |= dep.members

    def test_members_are_convs_with_equal_width(self, fixture_graph):
        depmap = compute_dependencies(fixture_graph)
        for dep in depmap.sets:
            widths = set()
            for member in dep.members:
                node = fixture_graph.node(member)
                assert node.kind == "Conv"
                widths.add(node.out_channels)
            assert len(widths) == 1


class TestPolicies:
    def test_skip_final_marks_unprunable(self, tiny_resnet):
        depmap = compute_dependencies(tiny_resnet, "skip_final")
        assert not any(d.coupling == "residual" for d in depmap.sets)
        for layer in ("g0_down", "g0b0_conv2", "g1b1_conv2", "g2_down"):
            assert layer in depmap.unprunable

    def test_skip_final_keeps_depthwise_sets(self, tiny_mobilenet):
        depmap = compute_dependencies(tiny_mobilenet, "skip_final")
        assert any(d.coupling == "depthwise" for d in depmap.sets)
        assert "b1_project" in depmap.unprunable

    def test_unknown_policy(self, tiny_resnet):
        with pytest.raises(ValueError):
            compute_dependencies(tiny_resnet, "both")


class TestConsumerMap:
    def test_covers_every_conv_channel(self, fixture_graph):
        depmap = compute_dependencies(fixture_graph)
        for node in fixture_graph.nodes:
            if node.kind == "Conv":
                for c in range(node.out_channels):
                    assert (node.id, c) in depmap.consumer_map

    def test_conv_consumer_positions_partition_inputs(self, fixture_graph):
        """Every input channel of every conv/linear consumer is claimed by
        exactly one producer position (or the graph input)."""
        depmap = compute_dependencies(fixture_graph)
        sources = channel_sources(fixture_graph)
        claimed: dict[str, list[int]] = {}
        for (_, _), entries in depmap.consumer_map.items():
            for consumer, position in entries:
                claimed.setdefault(consumer, []).append(position)
        for node in fixture_graph.nodes:
            if node.kind not in ("Conv", "Linear"):
                continue
            width = len(sources[node.inputs[0]])
            positions = claimed.get(node.id, [])
            fed_by_input = node.inputs[0] == INPUT_ID
            if fed_by_input:
                assert positions == []
            else:
                # Add-coupled producers both claim a position; distinct ones partition
                assert set(positions) <= set(range(width))

    def test_fire_concat_offsets_by_hand(self, tiny_squeezenet):
        depmap = compute_dependencies(tiny_squeezenet)
        # fire1_e1 has 16 filters feeding fire2_squeeze at offsets 0..15
        assert depmap.consumer_map[("fire1_e1", 0)] == [("fire2_squeeze", 0)]
        assert depmap.consumer_map[("fire1_e1", 15)] == [("fire2_squeeze", 15)]
        # fire1_e3 channels land after the 16 e1 channels
        assert depmap.consumer_map[("fire1_e3", 0)] == [("fire2_squeeze", 16)]
        assert depmap.consumer_map[("fire1_e3", 15)] == [("fire2_squeeze", 31)]

    def test_flatten_expansion_in_alexnet(self, tiny_alexnet):
        depmap = compute_dependencies(tiny_alexnet)
        # conv3 output is (64, 4, 4); channel c covers fc columns c*16 .. c*16+15
        entries = depmap.consumer_map[("conv3", 2)]
        assert entries == [("fc", 2 * 16 + j) for j in range(16)]

    def test_resnet_add_consumers_fan_out(self, tiny_resnet):
        depmap = compute_dependencies(tiny_resnet)
        # g0_down channel 0 flows through both blocks' Adds into g1 convs
        consumers = {c for c, _ in depmap.consumer_map[("g0_down", 0)]}
        assert {"g1b0_conv1", "g1_down"} <= consumers


class TestAnnotationCrossChecks:
    def test_residual_down_without_final(self):
        nodes = (
            conv("a", "input", 4, 3, bias=False),
            conv("down", "a", 4, 4, k=1, padding=0, bias=False,
                 tags=("residual_down", "residual_group:0")),
            *head("down", 4),
        )
        g = ModelGraph("bad", TensorShape((3, 8, 8)), 2, nodes)
        with pytest.raises(DependencyError, match="group 0"):
            compute_dependencies(g)

    def test_group_without_down_conv(self):
        nodes = (
            conv("a", "input", 4, 3, bias=False),
            conv("final", "a", 4, 4, bias=False, tags=("residual_final", "residual_group:0")),
            *head("final", 4),
        )
        g = ModelGraph("bad", TensorShape((3, 8, 8)), 2, nodes)
        with pytest.raises(DependencyError, match="residual_down"):
            compute_dependencies(g)

    def test_mislabeled_sequential_conv(self):
        # tagged final/down pair that is never joined by an Add
        nodes = (
            conv("a", "input", 4, 3, bias=False, tags=("residual_down", "residual_group:0")),
            conv("b", "a", 4, 4, bias=False, tags=("residual_final", "residual_group:0")),
            *head("b", 4),
        )
        g = ModelGraph("bad", TensorShape((3, 8, 8)), 2, nodes)
        with pytest.raises(DependencyError):
            compute_dependencies(g)

    def test_depthwise_fed_by_concat(self):
        nodes = (
            conv("a", "input", 4, 3, k=1, padding=0),
            conv("b", "input", 4, 3, k=1, padding=0),
            make_node("cat", "Concat", ["a", "b"]),
            conv("dw", "cat", 8, 8, k=3, padding=1, groups=8, bias=False, tags=("depthwise",)),
            *head("dw", 8),
        )
        g = ModelGraph("bad", TensorShape((3, 8, 8)), 2, nodes)
        with pytest.raises(DependencyError, match="Concat"):
            compute_dependencies(g)

    def test_add_over_concat_offset_coupling_rejected(self):
        nodes = (
            conv("a", "input", 4, 3, k=1, padding=0),
            conv("b", "input", 4, 3, k=1, padding=0),
            make_node("cat", "Concat", ["a", "b"]),
            conv("c", "input", 8, 3, k=1, padding=0),
            make_node("sum", "Add", ["cat", "c"]),
            *head("sum", 8),
        )
        g = ModelGraph("bad", TensorShape((3, 8, 8)), 2, nodes)
        with pytest.raises(DependencyError, match="offset"):
            compute_dependencies(g)

    def test_grouped_non_depthwise_rejected(self):
        nodes = (
            conv("a", "input", 8, 3, k=1, padding=0),
            conv("g", "a", 8, 8, k=3, padding=1, groups=2, bias=False),
            *head("g", 8),
        )
        g = ModelGraph("bad", TensorShape((3, 8, 8)), 2, nodes)
        with pytest.raises(DependencyError, match="grouped"):
            compute_dependencies(g)

    def test_input_coupled_add_is_unprunable(self):
        nodes = (
            conv("a", "input", 3, 3, bias=False),
            make_node("sum", "Add", ["a", INPUT_ID]),
            *head("sum", 3),
        )
        g = ModelGraph("inres", TensorShape((3, 8, 8)), 2, nodes)
        depmap = compute_dependencies(g)
        assert "a" in depmap.unprunable
        assert depmap.sets == []


class TestValidatePlan:
    def test_empty_plan_ok(self, tiny_resnet):
        depmap = compute_dependencies(tiny_resnet)
        assert validate_plan_against_deps(depmap, {}) == []

    def test_partial_group_removal_is_one_violation(self, tiny_resnet):
        depmap = compute_dependencies(tiny_resnet)
        violations = validate_plan_against_deps(depmap, {"g0b0_conv2": [3]})
        assert len(violations) == 1
        v = violations[0]
        assert v.kind == "coupling"
        assert v.filter_index == 3
        assert "g0b0_conv2" in v.removed_in
        assert set(v.retained_in) == {"g0_down", "g0b1_conv2"}

    def test_full_group_removal_ok(self, tiny_resnet):
        depmap = compute_dependencies(tiny_resnet)
        plan = {m: [1] for m in ("g0_down", "g0b0_conv2", "g0b1_conv2")}
        assert validate_plan_against_deps(depmap, plan) == []

    def test_unprunable_removal_flagged(self, tiny_resnet):
        depmap = compute_dependencies(tiny_resnet, "skip_final")
        violations = validate_plan_against_deps(depmap, {"g0_down": [0]})
        assert violations and violations[0].kind == "unprunable"

    def test_index_permuted_equal_count_violation(self, tiny_mobilenet):
        depmap = compute_dependencies(tiny_mobilenet)
        plan = {"b0_expand": [0], "b0_dw": [1]}
        violations = [v for v in validate_plan_against_deps(depmap, plan) if v.kind == "coupling"]
        assert {v.filter_index for v in violations} == {0, 1}


@pytest.mark.parametrize("fixture", ["tiny-resnet", "tiny-mobilenetv2"])
def test_fuzz_respecting_plans_shrink_and_violating_plans_rejected(fixture):
    from prunekit.fixtures import load_fixture
    from prunekit.pruning import shrink_graph

    graph = load_fixture(fixture)
    depmap = compute_dependencies(graph)
    rng = np.random.default_rng(7)
    for trial in range(100):
        plan = random_respecting_plan(graph, depmap, rng)
        assert validate_plan_against_deps(depmap, plan) == []
        shrunk, _ = shrink_graph(graph, plan)
        infer_shapes(shrunk)  # must not raise

        mode = "count" if trial % 2 == 0 else "permute"
        bad = corrupt_plan(graph, depmap, plan, rng, mode)
        if bad is None:
            continue
        assert validate_plan_against_deps(depmap, bad), f"violation not detected ({mode})"
        if mode == "count":
            with pytest.raises(ValidationError):
                shrink_graph(graph, bad)
